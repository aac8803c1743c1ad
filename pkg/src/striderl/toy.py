"""Inverted-pendulum balance task on the same simulation stack.

A single link driven by the same PD + articulated-body pipeline as the
biped, balancing at the upright. Cheap enough that the full training loop
runs in seconds, so it serves as the end-to-end sanity oracle for the
trainer: if PPO cannot solve this, nothing downstream is trustworthy.
"""

from __future__ import annotations

import numpy as np

from .dynamics import default_state, step_dynamics
from .env import Transition
from .model import make_pendulum

__all__ = ["PendulumBalanceEnv"]

UPRIGHT = np.pi


class PendulumBalanceEnv:
    """Keep the pendulum upright; reward peaks at 1 per step at rest on top.

    Episodes end when the link leans more than 1 rad from vertical, or at
    200 steps. Mirrors the locomotion env's stepping interface.
    """

    observation_dim = 3
    action_dim = 1
    max_episode_steps = 200

    def __init__(self, num_envs: int = 1, seed: int | list | None = 0):
        self.model = make_pendulum(mass=1.0, length=1.0, kp=25.0, kd=3.0, q_default=UPRIGHT)
        self.num_envs = num_envs
        if isinstance(seed, (int, np.integer)) or seed is None:
            seqs = np.random.SeedSequence(seed).spawn(num_envs)
        else:
            seqs = [np.random.SeedSequence(s) for s in seed]
        self._rng = [np.random.default_rng(s) for s in seqs]
        self.state = default_state(self.model, num_envs)
        self._episode_steps = np.zeros(num_envs, dtype=np.int64)
        self._episode_return = np.zeros(num_envs)
        self._was_reset = False

    def reset(self, env_ids: np.ndarray | None = None) -> np.ndarray:
        ids = np.arange(self.num_envs) if env_ids is None else np.asarray(env_ids)
        for e in ids:
            self.state.q[e, 0] = UPRIGHT + self._rng[e].uniform(-0.05, 0.05)
            self.state.qd[e, 0] = 0.0
            self.state.time[e] = 0.0
        self._episode_steps[ids] = 0
        self._episode_return[ids] = 0.0
        self._was_reset = True
        return self._observe()

    def step(self, actions: np.ndarray) -> Transition:
        if not self._was_reset:
            raise RuntimeError("call reset() before step()")
        actions = np.asarray(actions, dtype=np.float64).reshape(self.num_envs, 1)
        if not np.all(np.isfinite(actions)):
            raise ValueError("actions must be finite")
        targets = UPRIGHT + actions
        self.state, _, _ = step_dynamics(self.model, self.state, targets, 1e-3, n_substeps=20)

        err = self.state.q[:, 0] - UPRIGHT
        qd = self.state.qd[:, 0]
        reward = np.exp(-(err**2 + 0.1 * qd**2))
        terminated = np.abs(err) > 1.0
        self._episode_steps += 1
        self._episode_return += reward
        truncated = (self._episode_steps >= self.max_episode_steps) & ~terminated

        finished = terminated | truncated
        info = {
            "finished": finished.copy(),
            "episode_return": self._episode_return.copy(),
            "episode_length": self._episode_steps.copy(),
        }
        if finished.any():
            info["terminal_observation"] = self._observe()
            self.reset(np.flatnonzero(finished))
        return Transition(
            observation=self._observe(),
            reward=reward,
            breakdown=None,
            terminated=terminated,
            truncated=truncated,
            info=info,
        )

    def _observe(self) -> np.ndarray:
        q = self.state.q[:, 0]
        return np.stack([np.cos(q), np.sin(q), 0.1 * self.state.qd[:, 0]], axis=-1)

    # ------------------------------------------------------- checkpointing

    def snapshot(self) -> dict:
        return {
            "q": self.state.q.copy(),
            "qd": self.state.qd.copy(),
            "time": self.state.time.copy(),
            "episode_steps": self._episode_steps.copy(),
            "episode_return": self._episode_return.copy(),
            "rng": [g.bit_generator.state for g in self._rng],
            "was_reset": self._was_reset,
        }

    def restore(self, snap: dict) -> None:
        self.state.q[:] = snap["q"]
        self.state.qd[:] = snap["qd"]
        self.state.time[:] = snap["time"]
        self._episode_steps[:] = snap["episode_steps"]
        self._episode_return[:] = snap["episode_return"]
        for g, st in zip(self._rng, snap["rng"]):
            g.bit_generator.state = st
        self._was_reset = bool(snap["was_reset"])
