"""Deterministic evaluation of trained checkpoints.

Loads the policy (mean action, no sampling, observation statistics frozen),
runs command-grid rollouts into an EvalReport, writes trajectory logs the
teleop UI can replay, and re-evaluates logged trajectories through the
reward engine as a consistency check.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .configs import merge_section
from .env import EnvConfig, LocomotionEnv
from .gait import GaitSchedule, segment_index, stance_coefficients
from .model import build_biped
from .nets import Mlp, RunningNorm
from .ppo import CheckpointError, read_checkpoint_header
from .rewards import REWARD_NAMES, RewardWeights, StepContext, evaluate_all
from .spatial import euler_zyx_from_quat
from .trajlog import TrajectoryWriter, read_trajectory
from .dynamics import BipedState, forward_kinematics

__all__ = [
    "PolicyHandle",
    "load_policy",
    "act_deterministic",
    "EvalReport",
    "evaluate",
    "replay",
    "gait_adherence",
    "CONTACT_MATCH_THRESHOLD",
]

# a foot counts as load-bearing for the adherence metric above this force
CONTACT_MATCH_THRESHOLD = 50.0


@dataclass
class PolicyHandle:
    policy: Mlp
    log_std: np.ndarray
    obs_norm: RunningNorm
    sections: dict
    checkpoint_id: str


def load_policy(path: str) -> PolicyHandle:
    """Read just the actor and its observation statistics from a checkpoint."""
    header = read_checkpoint_header(path)
    with open(path, "rb") as fh:
        fh.readline()
        blob = fh.read()
    import hashlib

    if hashlib.sha256(blob).hexdigest() != header["sha256"]:
        raise CheckpointError(f"{path}: checksum mismatch")
    data = np.load(io.BytesIO(blob), allow_pickle=False)
    meta = json.loads(bytes(data["meta_json"]).decode())
    sections = meta["sections"]

    # fixed layout: policy weight/bias pairs, then log_std, then the critic
    hidden = tuple(sections["train"]["hidden"])
    n_layers = len(hidden) + 1
    weights = [data[f"param_{2 * k}"] for k in range(n_layers)]
    biases = [data[f"param_{2 * k + 1}"] for k in range(n_layers)]
    log_std = data[f"param_{2 * n_layers}"]
    rng = np.random.default_rng(0)
    policy = Mlp(weights[0].shape[0], hidden, weights[-1].shape[1], rng)
    for k in range(n_layers):
        policy.weights[k][:] = weights[k]
        policy.biases[k][:] = biases[k]
    norm = RunningNorm(weights[0].shape[0])
    norm.mean[:] = data["obs_mean"]
    norm.var[:] = data["obs_var"]
    norm.count = float(data["obs_count"][0])
    return PolicyHandle(
        policy=policy,
        log_std=log_std,
        obs_norm=norm,
        sections=sections,
        checkpoint_id=header["sha256"][:12],
    )


def act_deterministic(handle: PolicyHandle, observation: np.ndarray) -> np.ndarray:
    """Policy mean for one observation or a batch; no sampling.

    Rows are evaluated one at a time so a batched call is bit-identical to
    per-row calls (BLAS picks different kernels for different shapes).
    """
    obs = np.asarray(observation, dtype=np.float64)
    single = obs.ndim == 1
    if single:
        obs = obs[None, :]
    expected = handle.policy.weights[0].shape[0]
    if obs.shape[-1] != expected:
        raise ValueError(f"observation length {obs.shape[-1]}, expected {expected}")
    norm = handle.obs_norm.normalize(obs)
    action = np.stack([handle.policy.forward(norm[k:k + 1])[0] for k in range(len(norm))])
    return action[0] if single else action


def gait_adherence(fz: np.ndarray, coeffs: np.ndarray,
                   threshold: float = CONTACT_MATCH_THRESHOLD) -> float:
    """Fraction of (step, foot) samples where measured contact matches the
    scheduled stance coefficient."""
    measured = np.where(fz > threshold, 1, -1)
    return float(np.mean(measured == coeffs))


@dataclass
class EvalReport:
    rows: list  # one dict per command cell

    def write_csv(self, path: str) -> None:
        if not self.rows:
            cols = ["cmd_vx", "cmd_vy", "cmd_wz"]
        else:
            cols = list(self.rows[0].keys())
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: repr(float(v)) for k, v in row.items()})


def evaluate(
    checkpoint: str,
    command_grid: list,
    episodes_per_cell: int = 4,
    seed: int = 0,
    traj_dir: str | None = None,
) -> EvalReport:
    """Deterministic rollouts for each commanded velocity in the grid.

    Every cell runs `episodes_per_cell` episodes (one env each, consecutive
    seeds) to their first termination or the episode cap. Optionally writes
    a .traj log of the first episode per cell.
    """
    handle = load_policy(checkpoint)
    rows = []
    for cell_idx, cmd in enumerate(command_grid):
        cmd = np.asarray(cmd, dtype=np.float64)
        stats = _run_cell(handle, cmd, episodes_per_cell, seed + 1000 * cell_idx,
                          traj_dir=traj_dir, cell_idx=cell_idx)
        rows.append(stats)
    return EvalReport(rows=rows)


def _run_cell(handle: PolicyHandle, cmd, episodes: int, seed: int,
              traj_dir=None, cell_idx=0) -> dict:
    model = build_biped(handle.sections["model"])
    env_kwargs = {k: v for k, v in handle.sections["env"].items() if k != "schema"}
    weights = RewardWeights(**{k: v for k, v in handle.sections["rewards"].items()
                               if k != "schema"})
    env = LocomotionEnv(
        model=model, config=EnvConfig(**env_kwargs), weights=weights,
        num_envs=episodes, seed=[seed + i for i in range(episodes)],
    )
    env.auto_resample = False
    env.reset()
    env.set_command(cmd)

    writer = None
    if traj_dir is not None:
        writer = TrajectoryWriter(f"{traj_dir}/cell_{cell_idx:02d}.traj")

    active = np.ones(episodes, dtype=bool)
    lengths = np.zeros(episodes, dtype=np.int64)
    fell = np.zeros(episodes, dtype=bool)
    lin_err_sum = np.zeros(episodes)
    ang_err_sum = np.zeros(episodes)
    adherence_hits = np.zeros(episodes)
    adherence_count = np.zeros(episodes)
    term_sums = {k: np.zeros(episodes) for k in REWARD_NAMES}
    obs = env._observe()

    for _ in range(env.config.max_episode_steps):
        if not active.any():
            break
        action = act_deterministic(handle, obs)
        tr = env.step(action)
        # the stance schedule at the measurement time, for the adherence metric
        coeffs = stance_coefficients(env.schedule, env.state.time)
        measured = np.where(tr.info["fz"] > CONTACT_MATCH_THRESHOLD, 1, -1)
        hit = (measured == coeffs).sum(axis=-1)

        lengths[active] += 1
        lin_err_sum[active] += tr.info["track_err_lin"][active]
        ang_err_sum[active] += tr.info["track_err_ang"][active]
        adherence_hits[active] += hit[active]
        adherence_count[active] += 2
        for k in REWARD_NAMES:
            term_sums[k][active] += tr.breakdown.terms[k][active]
        ended = tr.terminated | tr.truncated
        if writer is not None and active[0] and not ended[0]:
            # skip the terminal row: auto-reset already replaced that state
            writer.append(env.state, action, env.command, tr.info["tau"],
                          _ReportShim(tr.info["fz"], tr.info["foot_speed_sq"]),
                          tr.breakdown, env=0)
        fell |= active & tr.terminated
        active &= ~ended
        env.set_command(cmd)  # auto-reset resamples; re-pin the cell command
        obs = tr.observation

    if writer is not None:
        writer.close()
    steps = np.maximum(lengths, 1)
    row = {
        "cmd_vx": cmd[0], "cmd_vy": cmd[1], "cmd_wz": cmd[2],
        "lin_vel_err": float(np.mean(lin_err_sum / steps)),
        "ang_vel_err": float(np.mean(ang_err_sum / steps)),
        "mean_ep_len": float(lengths.mean()),
        "fall_rate": float(fell.mean()),
        "gait_adherence": float(np.mean(adherence_hits / np.maximum(adherence_count, 1))),
    }
    for k in REWARD_NAMES:
        row[f"mean_{k}"] = float(np.mean(term_sums[k] / steps))
    return row


class _ReportShim:
    def __init__(self, fz, fss):
        self.fz = fz
        self.foot_speed_sq = fss


def replay(
    log_path: str,
    model=None,
    weights: RewardWeights | None = None,
    schedule: GaitSchedule | None = None,
    atol: float = 1e-9,
    check: bool = True,
) -> dict:
    """Recompute the reward breakdown from a logged trajectory.

    Returns per-term maximum absolute deviation from the logged values;
    with check=True (the default) raises if any exceeds `atol` — the
    determinism check for logs.
    """
    model = model if model is not None else build_biped(merge_section("model", None))
    weights = weights if weights is not None else RewardWeights()
    schedule = schedule if schedule is not None else GaitSchedule()
    cols = read_trajectory(log_path)
    n = len(cols["t"])

    q = np.stack([cols[f"q{i}"] for i in range(12)], axis=-1)
    qd = np.stack([cols[f"qd{i}"] for i in range(12)], axis=-1)
    tau = np.stack([cols[f"tau{i}"] for i in range(12)], axis=-1)
    act = np.stack([cols[f"act{i}"] for i in range(12)], axis=-1)
    quat = np.stack([cols["qw"], cols["qx"], cols["qy"], cols["qz"]], axis=-1)
    pos = np.stack([cols["px"], cols["py"], cols["pz"]], axis=-1)
    linvel = np.stack([cols["vx"], cols["vy"], cols["vz"]], axis=-1)
    angvel = np.stack([cols["wx"], cols["wy"], cols["wz"]], axis=-1)
    command = np.stack([cols["cmd_vx"], cols["cmd_vy"], cols["cmd_wz"]], axis=-1)
    fz = np.stack([cols["fz_left"], cols["fz_right"]], axis=-1)
    fss = np.stack([cols["fss_left"], cols["fss_right"]], axis=-1)

    roll, pitch, yaw = euler_zyx_from_quat(quat)
    cy, sy = np.cos(yaw), np.sin(yaw)
    vel_xy = np.stack(
        [cy * linvel[:, 0] + sy * linvel[:, 1], -sy * linvel[:, 0] + cy * linvel[:, 1]],
        axis=-1,
    )
    state = BipedState(
        base_pos=pos, base_quat=quat, base_linvel=linvel, base_angvel=angvel,
        q=q, qd=qd, time=cols["t"],
    )
    head_xy = forward_kinematics(model, state)["head"][1][:, :2]

    seg = segment_index(schedule, cols["t"])
    phase_changed = np.zeros(n, dtype=bool)
    phase_changed[1:] = seg[1:] != seg[:-1]
    prev_act = np.vstack([act[:1], act[:-1]])
    qd_prev = np.vstack([qd[:1], qd[:-1]])
    qd_prev2 = np.vstack([qd[:1], qd_prev[:-1]])

    ctx = StepContext(
        command=command,
        base_vel_xy=vel_xy,
        base_vel_z=linvel[:, 2],
        yaw_rate=angvel[:, 2],
        roll=roll,
        pitch=pitch,
        roll_rate=angvel[:, 0],
        pitch_rate=angvel[:, 1],
        tau=tau,
        action=act,
        prev_action=prev_act,
        q=q,
        q_default=model.q_default,
        qd=qd,
        qd_prev=qd_prev,
        qd_prev2=qd_prev2,
        fz=fz,
        foot_speed_sq=fss,
        stance_coeff=stance_coefficients(schedule, cols["t"]),
        phase_changed=phase_changed,
        base_xy=pos[:, :2],
        head_xy=head_xy,
        base_z=pos[:, 2],
        q_lower=model.q_lower,
        q_upper=model.q_upper,
        limit_slack=model.joint_limit_slack,
    )
    breakdown, _ = evaluate_all(ctx, weights)
    deviations = {}
    for k in REWARD_NAMES:
        deviations[k] = float(np.abs(breakdown.terms[k] - cols[k]).max())
    if check and max(deviations.values()) > atol:
        bad = max(deviations, key=deviations.get)
        raise TrajReplayMismatch(
            f"{log_path}: recomputed {bad} deviates by {deviations[bad]:.3e} (> {atol:.0e})"
        )
    return deviations


class TrajReplayMismatch(RuntimeError):
    pass
