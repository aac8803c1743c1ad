"""The velocity-commanded locomotion MDP, vectorized over environments.

Observation layout (45 scalars, scalings applied exactly once):

    [0]      yaw rate, body frame, x 0.25
    [1:4]    projected gravity
    [4:7]    command (vx, vy, yaw rate) x (2.0, 2.0, 0.25)
    [7:19]   joint angles relative to the default pose
    [19:31]  joint velocities
    [31:43]  last action
    [43:45]  gait clock (sin, cos)

Actions are offsets from the default pose: target = q_default +
action_scale * action, clamped to the joint range by the simulator. Each
env owns an independent RNG stream seeded from its own seed, so a batch
steps exactly like the same envs run separately, and auto-reset consumes
the same draws a manual reset would.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rewards as rw
from .dynamics import BipedState, default_state, forward_kinematics, step_dynamics
from .gait import GaitSchedule, clock_signal, segment_index, stance_coefficients
from .model import KinematicModel, default_biped
from .spatial import euler_zyx_from_quat, projected_gravity

__all__ = [
    "CommandRanges",
    "EnvConfig",
    "Transition",
    "LocomotionEnv",
    "build_observation",
    "sample_command",
    "OBS_DIM",
]

OBS_DIM = 45
YAW_RATE_SCALE = 0.25
COMMAND_SCALE = np.array([2.0, 2.0, 0.25])


@dataclass
class CommandRanges:
    """Sampling ranges for the velocity command, plus the resample policy."""

    vx: tuple = (-0.3, 1.0)
    vy: tuple = (-0.3, 0.3)
    wz: tuple = (-0.5, 0.5)
    resample_interval: float = 5.0
    p_zero: float = 0.1

    def __post_init__(self) -> None:
        for name in ("vx", "vy", "wz"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range inverted: {lo} > {hi}")
        if not 0.0 <= self.p_zero <= 1.0:
            raise ValueError("p_zero must be a probability")

    def lows(self) -> np.ndarray:
        return np.array([self.vx[0], self.vy[0], self.wz[0]])

    def highs(self) -> np.ndarray:
        return np.array([self.vx[1], self.vy[1], self.wz[1]])

    def clamp(self, cmd: np.ndarray) -> np.ndarray:
        return np.clip(cmd, self.lows(), self.highs())


@dataclass
class EnvConfig:
    control_dt: float = 0.02
    substeps: int = 20
    max_episode_steps: int = 1000
    action_scale: float = 0.5
    reset_noise: float = 0.02
    commands: CommandRanges = field(default_factory=CommandRanges)

    def __post_init__(self) -> None:
        if isinstance(self.commands, dict):
            self.commands = CommandRanges(**{
                k: tuple(v) if isinstance(v, (list, tuple)) else v
                for k, v in self.commands.items()
            })
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not 0.0 < self.physics_dt <= 0.01:
            raise ValueError(
                f"physics dt = control_dt/substeps = {self.physics_dt} outside (0, 0.01]"
            )

    @property
    def physics_dt(self) -> float:
        # derived, so control_dt == substeps * physics_dt holds by construction
        return self.control_dt / self.substeps


@dataclass
class Transition:
    observation: np.ndarray      # (n, 45) post-reset for finished envs
    reward: np.ndarray           # (n,)
    breakdown: rw.RewardBreakdown
    terminated: np.ndarray       # (n,) bool
    truncated: np.ndarray        # (n,) bool
    info: dict


def sample_command(rng: np.random.Generator, ranges: CommandRanges) -> np.ndarray:
    """Zero command with probability p_zero, else uniform per axis."""
    if rng.uniform() < ranges.p_zero:
        return np.zeros(3)
    return rng.uniform(ranges.lows(), ranges.highs())


def build_observation(
    state: BipedState,
    command: np.ndarray,
    clock: np.ndarray,
    last_action: np.ndarray,
    q_default: np.ndarray,
) -> np.ndarray:
    """Assemble the 45-dim observation; see the module docstring for layout."""
    n = state.num_envs
    obs = np.empty((n, OBS_DIM))
    obs[:, 0] = state.base_angvel[:, 2] * YAW_RATE_SCALE
    obs[:, 1:4] = projected_gravity(state.base_quat)
    obs[:, 4:7] = command * COMMAND_SCALE
    obs[:, 7:19] = state.q - q_default
    obs[:, 19:31] = state.qd
    obs[:, 31:43] = last_action
    obs[:, 43:45] = clock
    return obs


class LocomotionEnv:
    """Batched locomotion environment; `num_envs=1` is the scalar case.

    `seed` may be one int (per-env seeds derived from it) or a sequence of
    ints, one per env. Stepping a batch is bitwise identical to stepping
    the same envs individually with the same per-env seeds.
    """

    def __init__(
        self,
        model: KinematicModel | None = None,
        config: EnvConfig | None = None,
        weights: rw.RewardWeights | None = None,
        schedule: GaitSchedule | None = None,
        num_envs: int = 1,
        seed: int | list | None = 0,
    ):
        self.model = model if model is not None else default_biped()
        self.config = config if config is not None else EnvConfig()
        self.weights = weights if weights is not None else rw.RewardWeights()
        self.schedule = schedule if schedule is not None else GaitSchedule()
        self.num_envs = num_envs
        if isinstance(seed, (int, np.integer)) or seed is None:
            seqs = np.random.SeedSequence(seed).spawn(num_envs)
        else:
            if len(seed) != num_envs:
                raise ValueError("need one seed per env")
            seqs = [np.random.SeedSequence(s) for s in seed]
        self._rng = [np.random.default_rng(s) for s in seqs]

        nb = self.model.nb
        self.state = default_state(self.model, num_envs)
        self._standing_height = self.state.base_pos[0, 2]
        self.command = np.zeros((num_envs, 3))
        self.last_action = np.zeros((num_envs, nb))
        self._has_prev_action = np.zeros(num_envs, dtype=bool)
        self._prev_action = np.zeros((num_envs, nb))
        self._qd_prev = np.zeros((num_envs, nb))
        self._qd_prev2 = np.zeros((num_envs, nb))
        self._segment = np.zeros(num_envs, dtype=np.int64)
        self._episode_steps = np.zeros(num_envs, dtype=np.int64)
        self._episode_return = np.zeros(num_envs)
        self.auto_resample = True
        self._was_reset = False

    # ------------------------------------------------------------ lifecycle

    def reset(self, env_ids: np.ndarray | None = None) -> np.ndarray:
        """Reset all (or the given) envs and return the full observation batch."""
        ids = np.arange(self.num_envs) if env_ids is None else np.asarray(env_ids)
        fresh = default_state(self.model, len(ids))
        for row, e in enumerate(ids):
            rng = self._rng[e]
            fresh.q[row] += rng.uniform(-self.config.reset_noise,
                                        self.config.reset_noise, self.model.nb)
            self.command[e] = sample_command(rng, self.config.commands)
        for f in ("base_pos", "base_quat", "base_linvel", "base_angvel", "q", "qd", "time"):
            getattr(self.state, f)[ids] = getattr(fresh, f)
        if self.state.contact_anchor is not None:
            self.state.contact_anchor[ids] = 0.0
            self.state.contact_active[ids] = False
        self.last_action[ids] = 0.0
        self._has_prev_action[ids] = False
        self._prev_action[ids] = 0.0
        self._qd_prev[ids] = self.state.qd[ids]
        self._qd_prev2[ids] = self.state.qd[ids]
        self._segment[ids] = segment_index(self.schedule, self.state.time[ids])
        self._episode_steps[ids] = 0
        self._episode_return[ids] = 0.0
        self._was_reset = True
        return self._observe()

    def set_command(self, cmd: np.ndarray, env_ids: np.ndarray | None = None) -> np.ndarray:
        """Override the command (teleop); clamped to the sampling ranges."""
        ids = np.arange(self.num_envs) if env_ids is None else np.asarray(env_ids)
        clamped = self.config.commands.clamp(np.asarray(cmd, dtype=np.float64))
        self.command[ids] = clamped
        return clamped

    def step(self, actions: np.ndarray) -> Transition:
        if not self._was_reset:
            raise RuntimeError("call reset() before step()")
        actions = np.asarray(actions, dtype=np.float64)
        if actions.ndim == 1:
            actions = actions[None, :]
        if actions.shape != (self.num_envs, self.model.nb):
            raise ValueError(f"actions must have shape {(self.num_envs, self.model.nb)}")
        if not np.all(np.isfinite(actions)):
            raise ValueError("actions must be finite")

        # first step after a reset: rate penalties are zero by construction
        fresh = ~self._has_prev_action
        self._prev_action[fresh] = actions[fresh]
        self._has_prev_action[:] = True

        targets = self.model.q_default + self.config.action_scale * actions
        prev_segment = self._segment.copy()
        self.state, report, tau = step_dynamics(
            self.model, self.state, targets,
            self.config.physics_dt, n_substeps=self.config.substeps,
        )
        if fresh.any():
            self._qd_prev[fresh] = self.state.qd[fresh]
            self._qd_prev2[fresh] = self.state.qd[fresh]

        ctx = self._make_context(actions, tau, report, prev_segment)
        breakdown, done = rw.evaluate_all(ctx, self.weights)
        terminated = done | report.diverged
        # divergence terminates with the penalty even though the rolled-back
        # state looks healthy
        extra = report.diverged & ~done
        if extra.any():
            breakdown.terms["r9"] = np.where(extra, -self.weights.w9, breakdown.terms["r9"])
            breakdown.total = breakdown.total - np.where(extra, self.weights.w9, 0.0)

        self._episode_steps += 1
        self._episode_return += breakdown.total
        truncated = (self._episode_steps >= self.config.max_episode_steps) & ~terminated

        self._segment = segment_index(self.schedule, self.state.time)
        self._prev_action = actions.copy()
        self.last_action = actions.copy()
        self._qd_prev2 = self._qd_prev
        self._qd_prev = self.state.qd.copy()

        finished = terminated | truncated
        info = {
            "command": self.command.copy(),
            "base_pos": self.state.base_pos.copy(),
            "base_linvel": self.state.base_linvel.copy(),
            "diverged": report.diverged.copy(),
            "fz": report.fz.copy(),
            "foot_speed_sq": report.foot_speed_sq.copy(),
            "tau": tau.copy(),
            "finished": finished.copy(),
            "episode_return": self._episode_return.copy(),
            "episode_length": self._episode_steps.copy(),
            "track_err_lin": np.linalg.norm(ctx.command[:, :2] - ctx.base_vel_xy, axis=-1),
            "track_err_ang": np.abs(ctx.command[:, 2] - ctx.yaw_rate),
        }
        if finished.any():
            info["terminal_observation"] = self._observe()
            self.reset(np.flatnonzero(finished))
        if self.auto_resample:
            due = (~finished) & (self._episode_steps % self._resample_every() == 0)
            for e in np.flatnonzero(due):
                self.command[e] = sample_command(self._rng[e], self.config.commands)

        obs = self._observe()
        return Transition(
            observation=obs,
            reward=breakdown.total,
            breakdown=breakdown,
            terminated=terminated,
            truncated=truncated,
            info=info,
        )

    # -------------------------------------------------------- checkpointing

    @property
    def observation_dim(self) -> int:
        return OBS_DIM

    @property
    def action_dim(self) -> int:
        return self.model.nb

    def snapshot(self) -> dict:
        """Full mutable state for bit-exact resume, RNG streams included."""
        snap = {
            "command": self.command.copy(),
            "last_action": self.last_action.copy(),
            "has_prev_action": self._has_prev_action.copy(),
            "prev_action": self._prev_action.copy(),
            "qd_prev": self._qd_prev.copy(),
            "qd_prev2": self._qd_prev2.copy(),
            "segment": self._segment.copy(),
            "episode_steps": self._episode_steps.copy(),
            "episode_return": self._episode_return.copy(),
            "rng": [g.bit_generator.state for g in self._rng],
            "auto_resample": self.auto_resample,
            "was_reset": self._was_reset,
        }
        for f in ("base_pos", "base_quat", "base_linvel", "base_angvel", "q", "qd", "time",
                  "contact_anchor", "contact_active"):
            arr = getattr(self.state, f)
            snap[f"state_{f}"] = None if arr is None else arr.copy()
        return snap

    def restore(self, snap: dict) -> None:
        self.command[:] = snap["command"]
        self.last_action[:] = snap["last_action"]
        self._has_prev_action[:] = snap["has_prev_action"]
        self._prev_action[:] = snap["prev_action"]
        self._qd_prev[:] = snap["qd_prev"]
        self._qd_prev2[:] = snap["qd_prev2"]
        self._segment[:] = snap["segment"]
        self._episode_steps[:] = snap["episode_steps"]
        self._episode_return[:] = snap["episode_return"]
        for g, st in zip(self._rng, snap["rng"]):
            g.bit_generator.state = st
        self.auto_resample = bool(snap["auto_resample"])
        self._was_reset = bool(snap["was_reset"])
        for f in ("base_pos", "base_quat", "base_linvel", "base_angvel", "q", "qd", "time"):
            getattr(self.state, f)[:] = snap[f"state_{f}"]
        for f in ("contact_anchor", "contact_active"):
            val = snap[f"state_{f}"]
            if val is None:
                setattr(self.state, f, None)
            else:
                setattr(self.state, f, val.copy())

    # ------------------------------------------------------------ internals

    def _resample_every(self) -> int:
        return max(1, int(round(self.config.commands.resample_interval / self.config.control_dt)))

    def _observe(self) -> np.ndarray:
        clock = clock_signal(self.schedule, self.state.time)
        return build_observation(
            self.state, self.command, clock, self.last_action, self.model.q_default
        )

    def _make_context(self, actions, tau, report, prev_segment) -> rw.StepContext:
        s = self.state
        roll, pitch, yaw = euler_zyx_from_quat(s.base_quat)
        cy, sy = np.cos(yaw), np.sin(yaw)
        vel_xy = np.stack(
            [
                cy * s.base_linvel[:, 0] + sy * s.base_linvel[:, 1],
                -sy * s.base_linvel[:, 0] + cy * s.base_linvel[:, 1],
            ],
            axis=-1,
        )
        frames = forward_kinematics(self.model, s)
        head_xy = frames["head"][1][:, :2]
        segment_now = segment_index(self.schedule, s.time)
        return rw.StepContext(
            command=self.command,
            base_vel_xy=vel_xy,
            base_vel_z=s.base_linvel[:, 2],
            yaw_rate=s.base_angvel[:, 2],
            roll=roll,
            pitch=pitch,
            roll_rate=s.base_angvel[:, 0],
            pitch_rate=s.base_angvel[:, 1],
            tau=tau,
            action=actions,
            prev_action=self._prev_action,
            q=s.q,
            q_default=self.model.q_default,
            qd=s.qd,
            qd_prev=self._qd_prev,
            qd_prev2=self._qd_prev2,
            fz=report.fz,
            foot_speed_sq=report.foot_speed_sq,
            stance_coeff=stance_coefficients(self.schedule, s.time),
            phase_changed=segment_now != prev_segment,
            base_xy=s.base_pos[:, :2],
            head_xy=head_xy,
            base_z=s.base_pos[:, 2],
            q_lower=self.model.q_lower,
            q_upper=self.model.q_upper,
            limit_slack=self.model.joint_limit_slack,
        )
