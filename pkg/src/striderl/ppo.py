"""PPO with clipped surrogate and GAE over the batched environments.

The actor and critic are separate tanh MLPs (4 x 128 by default) with a
state-independent log-std vector; one Adam instance optimizes everything.
Rollout collection, the update, checkpointing and the metrics log are all
deterministic under a fixed seed: sampling and minibatch shuffling come
from one trainer-owned generator, and environments own per-env streams.

Checkpoints are a JSON header line (format version, config hash, payload
digest) followed by an npz blob carrying parameters, optimizer moments,
observation statistics, env snapshot, and RNG states — enough to resume
training bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .configs import config_hash, merge_section
from .env import EnvConfig, LocomotionEnv
from .model import build_biped
from .nets import (
    LOG_2PI,
    LOG_STD_MAX,
    LOG_STD_MIN,
    Adam,
    Mlp,
    RunningNorm,
    gaussian_entropy,
    gaussian_log_prob,
)
from .rewards import REWARD_NAMES, RewardWeights
from .toy import PendulumBalanceEnv

__all__ = [
    "PpoConfig",
    "TrainerState",
    "NumericalError",
    "CheckpointError",
    "init_trainer",
    "collect_rollout",
    "compute_gae",
    "ppo_update",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT = "striderl-checkpoint"
CHECKPOINT_VERSION = 1


class NumericalError(RuntimeError):
    """Non-finite loss or gradient; parameters were restored."""


class CheckpointError(RuntimeError):
    pass


@dataclass
class PpoConfig:
    task: str = "biped"              # "biped" or "pendulum"
    total_steps: int = 5_000_000
    num_envs: int = 256
    rollout_steps: int = 64
    minibatches: int = 32
    epochs: int = 4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 1.0
    hidden: tuple = (128, 128, 128, 128)
    log_std_init: float = -0.7
    normalize_obs: bool = True
    seed: int = 0
    checkpoint_every: int = 50       # updates between checkpoints

    def __post_init__(self) -> None:
        if isinstance(self.hidden, list):
            self.hidden = tuple(self.hidden)
        if (self.num_envs * self.rollout_steps) % self.minibatches != 0:
            raise ValueError("rollout size must divide evenly into minibatches")
        if self.task not in ("biped", "pendulum"):
            raise ValueError(f"unknown task {self.task!r}")

    @property
    def batch_size(self) -> int:
        return self.num_envs * self.rollout_steps


@dataclass
class TrainerState:
    config: PpoConfig
    sections: dict
    env: object
    policy: Mlp
    value: Mlp
    log_std: np.ndarray
    opt: Adam
    obs_norm: RunningNorm
    rng: np.random.Generator
    env_steps: int = 0
    updates: int = 0
    last_obs: np.ndarray | None = None
    ep_returns: deque = field(default_factory=lambda: deque(maxlen=100))
    ep_lengths: deque = field(default_factory=lambda: deque(maxlen=100))

    @property
    def params(self) -> list[np.ndarray]:
        return self.policy.params + [self.log_std] + self.value.params

    def clamped_log_std(self) -> np.ndarray:
        return np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)


def make_task_env(config: PpoConfig, sections: dict):
    if config.task == "pendulum":
        return PendulumBalanceEnv(num_envs=config.num_envs, seed=config.seed)
    model = build_biped(sections["model"])
    env_kwargs = {k: v for k, v in sections["env"].items() if k != "schema"}
    weights = RewardWeights(**{k: v for k, v in sections["rewards"].items() if k != "schema"})
    return LocomotionEnv(
        model=model,
        config=EnvConfig(**env_kwargs),
        weights=weights,
        num_envs=config.num_envs,
        seed=config.seed,
    )


def init_trainer(sections: dict | None = None, **overrides) -> TrainerState:
    """Build a fresh trainer from merged config sections (defaults if None)."""
    if sections is None:
        sections = {k: merge_section(k, None) for k in ("model", "env", "rewards", "train")}
    train_kwargs = {k: v for k, v in sections["train"].items() if k != "schema"}
    train_kwargs.update(overrides)
    config = PpoConfig(**train_kwargs)
    env = make_task_env(config, sections)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xC0FFEE]))
    policy = Mlp(env.observation_dim, config.hidden, env.action_dim, rng, final_gain=0.01)
    value = Mlp(env.observation_dim, config.hidden, 1, rng, final_gain=1.0)
    log_std = np.full(env.action_dim, float(config.log_std_init))
    ts = TrainerState(
        config=config,
        sections=sections,
        env=env,
        policy=policy,
        value=value,
        log_std=log_std,
        opt=Adam([], lr=config.lr),
        obs_norm=RunningNorm(env.observation_dim),
        rng=rng,
    )
    ts.opt = Adam(ts.params, lr=config.lr)
    ts.last_obs = env.reset()
    return ts


@dataclass
class RolloutBuffers:
    obs: np.ndarray          # (T, N, D) normalized, as fed to the nets
    actions: np.ndarray      # (T, N, A)
    log_probs: np.ndarray    # (T, N)
    values: np.ndarray       # (T, N)
    rewards: np.ndarray      # (T, N)
    dones: np.ndarray        # (T, N) episode boundary (terminated or truncated)
    terminal_values: np.ndarray  # (T, N) value past the boundary (0 if terminated)
    bootstrap: np.ndarray    # (N,) value of the state after the last step
    stats: dict


def _policy_value(ts: TrainerState, norm_obs: np.ndarray):
    mean = ts.policy.forward(norm_obs)
    value = ts.value.forward(norm_obs)[:, 0]
    return mean, value


def collect_rollout(ts: TrainerState, steps: int | None = None) -> RolloutBuffers:
    """Sample T steps from the batched env under the current policy."""
    cfg = ts.config
    t_steps = cfg.rollout_steps if steps is None else steps
    n = cfg.num_envs
    d = ts.env.observation_dim
    a_dim = ts.env.action_dim

    obs_buf = np.empty((t_steps, n, d))
    act_buf = np.empty((t_steps, n, a_dim))
    logp_buf = np.empty((t_steps, n))
    val_buf = np.empty((t_steps, n))
    rew_buf = np.empty((t_steps, n))
    done_buf = np.zeros((t_steps, n), dtype=bool)
    tval_buf = np.zeros((t_steps, n))

    term_names = REWARD_NAMES if cfg.task == "biped" else ()
    term_sums = {k: 0.0 for k in term_names}
    track_lin = 0.0
    track_ang = 0.0
    divergences = 0
    raw_obs = ts.last_obs
    log_std = ts.clamped_log_std()
    std = np.exp(log_std)

    for t in range(t_steps):
        if cfg.normalize_obs:
            ts.obs_norm.update(raw_obs)
            norm_obs = ts.obs_norm.normalize(raw_obs)
        else:
            norm_obs = raw_obs
        mean, value = _policy_value(ts, norm_obs)
        noise = ts.rng.standard_normal(mean.shape)
        actions = mean + std * noise
        logp = gaussian_log_prob(mean, log_std, actions)

        tr = ts.env.step(actions)
        obs_buf[t] = norm_obs
        act_buf[t] = actions
        logp_buf[t] = logp
        val_buf[t] = value
        rew_buf[t] = tr.reward
        ends = tr.terminated | tr.truncated
        done_buf[t] = ends
        if tr.truncated.any():
            term_obs = tr.info["terminal_observation"]
            norm_term = ts.obs_norm.normalize(term_obs) if cfg.normalize_obs else term_obs
            tv = ts.value.forward(norm_term)[:, 0]
            tval_buf[t] = np.where(tr.truncated, tv, 0.0)

        fin = tr.info["finished"]
        if fin.any():
            for r in tr.info["episode_return"][fin]:
                ts.ep_returns.append(float(r))
            for length in tr.info["episode_length"][fin]:
                ts.ep_lengths.append(int(length))
        if cfg.task == "biped":
            for k in term_names:
                term_sums[k] += float(tr.breakdown.terms[k].mean())
            track_lin += float(tr.info["track_err_lin"].mean())
            track_ang += float(tr.info["track_err_ang"].mean())
            divergences += int(tr.info["diverged"].sum())
        raw_obs = tr.observation

    ts.last_obs = raw_obs
    if cfg.normalize_obs:
        final_norm = ts.obs_norm.normalize(raw_obs)
    else:
        final_norm = raw_obs
    bootstrap = ts.value.forward(final_norm)[:, 0]
    ts.env_steps += t_steps * n

    stats = {
        "mean_return": float(np.mean(ts.ep_returns)) if ts.ep_returns else 0.0,
        "mean_ep_len": float(np.mean(ts.ep_lengths)) if ts.ep_lengths else 0.0,
        "divergences": divergences,
        "track_err_lin": track_lin / t_steps,
        "track_err_ang": track_ang / t_steps,
    }
    for k in term_names:
        stats[f"mean_{k}"] = term_sums[k] / t_steps
    return RolloutBuffers(
        obs=obs_buf, actions=act_buf, log_probs=logp_buf, values=val_buf,
        rewards=rew_buf, dones=done_buf, terminal_values=tval_buf,
        bootstrap=bootstrap, stats=stats,
    )


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    bootstrap: np.ndarray | None = None,
    terminal_values: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-scan generalized advantage estimation.

    `dones` marks episode boundaries (no flow across them). When an episode
    was truncated rather than terminated, pass the value of its final state
    in `terminal_values` so the tail is bootstrapped instead of zeroed.
    Returns (advantages, value targets); targets = advantages + values.
    """
    t_steps, n = rewards.shape
    if bootstrap is None:
        bootstrap = np.zeros(n)
    if terminal_values is None:
        terminal_values = np.zeros_like(rewards)
    adv = np.zeros_like(rewards)
    gae = np.zeros(n)
    for t in range(t_steps - 1, -1, -1):
        v_next = bootstrap if t == t_steps - 1 else values[t + 1]
        v_next = np.where(dones[t], terminal_values[t], v_next)
        delta = rewards[t] + gamma * v_next - values[t]
        gae = delta + gamma * lam * (~dones[t]) * gae
        adv[t] = gae
    return adv, adv + values


def _global_norm_clip(grads: list[np.ndarray], max_norm: float) -> float:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


def loss_and_grads(
    policy: Mlp,
    value: Mlp,
    log_std: np.ndarray,
    obs: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    adv: np.ndarray,
    targets: np.ndarray,
    clip_eps: float,
    value_coef: float,
    entropy_coef: float,
) -> tuple[float, list[np.ndarray], dict]:
    """The full PPO minibatch objective and its analytic gradients.

    Gradient order matches policy.params + [log_std] + value.params. The
    clipped-surrogate derivative follows the min: the unclipped branch when
    s1 <= s2, otherwise the clipped branch (zero slope outside the trust
    region). Checked against central finite differences in the tests.
    """
    m = len(obs)
    log_std_c = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    std = np.exp(log_std_c)
    inside = (log_std > LOG_STD_MIN) & (log_std < LOG_STD_MAX)

    mean, cache_p = policy.forward(obs, want_cache=True)
    val, cache_v = value.forward(obs, want_cache=True)
    val = val[:, 0]

    z = (actions - mean) / std
    logp = -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std_c) \
        - 0.5 * LOG_2PI * actions.shape[1]
    ratio = np.exp(logp - logp_old)
    s1 = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    s2 = clipped * adv
    policy_loss = -np.mean(np.minimum(s1, s2))
    value_loss = np.mean((val - targets) ** 2)
    entropy = gaussian_entropy(log_std_c)
    loss = policy_loss + value_coef * value_loss - entropy_coef * entropy

    use_s1 = s1 <= s2
    in_clip = (ratio > 1.0 - clip_eps) & (ratio < 1.0 + clip_eps)
    dsurr_dratio = np.where(use_s1, adv, np.where(in_clip, adv, 0.0))
    dlogp = -(dsurr_dratio * ratio) / m
    dmean = dlogp[:, None] * (z / std)
    dlogstd = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0)
    dlogstd = np.where(inside, dlogstd, 0.0)
    dlogstd = dlogstd - entropy_coef * np.where(inside, 1.0, 0.0)
    dval = (2.0 * value_coef / m) * (val - targets)

    grads = policy.backward(cache_p, dmean) + [dlogstd] + value.backward(cache_v, dval[:, None])
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
        "approx_kl": float(np.mean((ratio - 1.0) - np.log(np.maximum(ratio, 1e-12)))),
    }
    return float(loss), grads, stats


def ppo_update(ts: TrainerState, buf: RolloutBuffers) -> dict:
    """Epochs of minibatch clipped-surrogate updates; restores parameters on
    any non-finite loss or gradient and raises NumericalError."""
    cfg = ts.config
    b = buf.obs.shape[0] * buf.obs.shape[1]
    obs = buf.obs.reshape(b, -1)
    actions = buf.actions.reshape(b, -1)
    logp_old = buf.log_probs.reshape(b)
    adv, targets = compute_gae(
        buf.rewards, buf.values, buf.dones, cfg.gamma, cfg.gae_lambda,
        bootstrap=buf.bootstrap, terminal_values=buf.terminal_values,
    )
    adv = adv.reshape(b)
    targets = targets.reshape(b)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    snapshot = [p.copy() for p in ts.params]
    opt_snapshot = ([m.copy() for m in ts.opt.m], [v.copy() for v in ts.opt.v], ts.opt.t)
    mb_size = max(1, b // cfg.minibatches)

    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
            "clip_fraction": 0.0, "approx_kl": 0.0}
    count = 0
    try:
        for _ in range(cfg.epochs):
            perm = ts.rng.permutation(b)
            for start in range(0, b, mb_size):
                idx = perm[start:start + mb_size]
                loss, grads, stats = loss_and_grads(
                    ts.policy, ts.value, ts.log_std,
                    obs[idx], actions[idx], logp_old[idx], adv[idx], targets[idx],
                    cfg.clip_eps, cfg.value_coef, cfg.entropy_coef,
                )
                if not np.isfinite(loss):
                    raise NumericalError(f"non-finite loss at update {ts.updates}")
                for g in grads:
                    if not np.all(np.isfinite(g)):
                        raise NumericalError(f"non-finite gradient at update {ts.updates}")
                _global_norm_clip(grads, cfg.max_grad_norm)
                ts.opt.step(ts.params, grads)
                for k in sums:
                    sums[k] += stats[k]
                count += 1
    except NumericalError:
        for p, saved in zip(ts.params, snapshot):
            p[:] = saved
        ts.opt.m, ts.opt.v, ts.opt.t = opt_snapshot
        raise

    ts.updates += 1
    return {k: v / count for k, v in sums.items()}


METRIC_COLUMNS = [
    "update", "env_steps", "mean_return", "mean_ep_len",
    "policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl",
    "track_err_lin", "track_err_ang", "divergences",
] + [f"mean_{k}" for k in REWARD_NAMES]


def train(
    sections: dict | None = None,
    out_dir: str = "runs/default",
    resume: str | None = None,
    progress: bool = False,
    **overrides,
) -> dict:
    """Alternate collect/update until total_steps; returns a run summary.

    Writes metrics.csv (one row per update, no wall-clock columns so reruns
    are bit-comparable) and periodic checkpoints into out_dir.
    """
    if resume is not None:
        ts = load_checkpoint(resume)
    else:
        ts = init_trainer(sections, **overrides)
    cfg = ts.config
    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    mode = "a" if resume is not None and os.path.exists(metrics_path) else "w"
    n_updates = cfg.total_steps // (cfg.num_envs * cfg.rollout_steps)
    ckpt_paths = []
    with open(metrics_path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(METRIC_COLUMNS)
        while ts.env_steps < cfg.total_steps:
            buf = collect_rollout(ts)
            upd = ppo_update(ts, buf)
            row = {**buf.stats, **upd, "update": ts.updates, "env_steps": ts.env_steps}
            writer.writerow([_fmt(row.get(c, "")) for c in METRIC_COLUMNS])
            fh.flush()
            if progress and ts.updates % 10 == 0:
                print(
                    f"update {ts.updates}/{n_updates} steps {ts.env_steps} "
                    f"ret {row['mean_return']:.2f} len {row['mean_ep_len']:.0f} "
                    f"kl {upd['approx_kl']:.4f}",
                    flush=True,
                )
            if ts.updates % cfg.checkpoint_every == 0:
                path = os.path.join(out_dir, f"ckpt_{ts.updates:06d}.npz")
                save_checkpoint(ts, path)
                ckpt_paths.append(path)
    final_path = os.path.join(out_dir, "ckpt_final.npz")
    save_checkpoint(ts, final_path)
    ckpt_paths.append(final_path)
    return {
        "updates": ts.updates,
        "env_steps": ts.env_steps,
        "mean_return": float(np.mean(ts.ep_returns)) if ts.ep_returns else 0.0,
        "mean_ep_len": float(np.mean(ts.ep_lengths)) if ts.ep_lengths else 0.0,
        "checkpoints": ckpt_paths,
        "metrics_csv": metrics_path,
    }


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


# ------------------------------------------------------------- checkpoints

def save_checkpoint(ts: TrainerState, path: str) -> None:
    arrays = {}
    for i, p in enumerate(ts.params):
        arrays[f"param_{i}"] = p
    for i, m in enumerate(ts.opt.m):
        arrays[f"adam_m_{i}"] = m
    for i, v in enumerate(ts.opt.v):
        arrays[f"adam_v_{i}"] = v
    arrays["obs_mean"] = ts.obs_norm.mean
    arrays["obs_var"] = ts.obs_norm.var
    arrays["obs_count"] = np.array([ts.obs_norm.count])
    arrays["last_obs"] = ts.last_obs
    arrays["ep_returns"] = np.array(list(ts.ep_returns))
    arrays["ep_lengths"] = np.array(list(ts.ep_lengths), dtype=np.int64)
    env_snap = ts.env.snapshot()
    env_rng = env_snap.pop("rng")
    env_scalars = {}
    for k, v in list(env_snap.items()):
        if isinstance(v, np.ndarray):
            arrays[f"env_{k}"] = v
        else:
            env_scalars[k] = v
            env_snap.pop(k)

    meta = {
        "adam_t": ts.opt.t,
        "env_steps": ts.env_steps,
        "updates": ts.updates,
        "rng_state": ts.rng.bit_generator.state,
        "env_rng": env_rng,
        "env_scalars": env_scalars,
        "sections": ts.sections,
    }
    arrays["meta_json"] = np.frombuffer(json.dumps(meta, default=str).encode(), dtype=np.uint8)

    payload = io.BytesIO()
    np.savez(payload, **{k: v for k, v in arrays.items() if v is not None})
    blob = payload.getvalue()
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash(ts.sections),
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(blob)


def read_checkpoint_header(path: str) -> dict:
    with open(path, "rb") as fh:
        line = fh.readline()
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a checkpoint (bad header)") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    return header


def load_checkpoint(path: str, force: bool = False) -> TrainerState:
    """Rebuild a trainer exactly as saved; refuses corrupted files."""
    with open(path, "rb") as fh:
        line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a checkpoint (bad header)") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    digest = hashlib.sha256(blob).hexdigest()
    if digest != header.get("sha256"):
        if not force:
            raise CheckpointError(f"{path}: checksum mismatch, file corrupted or tampered")
    data = np.load(io.BytesIO(blob), allow_pickle=False)
    meta = json.loads(bytes(data["meta_json"]).decode())

    sections = meta["sections"]
    if config_hash(sections) != header["config_hash"] and not force:
        raise CheckpointError(f"{path}: config hash mismatch")
    ts = init_trainer(sections)
    for i, p in enumerate(ts.params):
        p[:] = data[f"param_{i}"]
    for i in range(len(ts.opt.m)):
        ts.opt.m[i][:] = data[f"adam_m_{i}"]
        ts.opt.v[i][:] = data[f"adam_v_{i}"]
    ts.opt.t = int(meta["adam_t"])
    ts.obs_norm.mean[:] = data["obs_mean"]
    ts.obs_norm.var[:] = data["obs_var"]
    ts.obs_norm.count = float(data["obs_count"][0])
    ts.last_obs = data["last_obs"]
    ts.ep_returns = deque(map(float, data["ep_returns"]), maxlen=100)
    ts.ep_lengths = deque(map(int, data["ep_lengths"]), maxlen=100)
    ts.env_steps = int(meta["env_steps"])
    ts.updates = int(meta["updates"])
    rng_state = meta["rng_state"]
    _fix_rng_state(rng_state)
    ts.rng.bit_generator.state = rng_state

    env_snap = {}
    for k in data.files:
        if k.startswith("env_"):
            env_snap[k[4:]] = data[k]
    for k, v in meta["env_scalars"].items():
        env_snap[k] = v
    for st in meta["env_rng"]:
        _fix_rng_state(st)
    env_snap["rng"] = meta["env_rng"]
    if hasattr(ts.env, "state") and ts.env.__class__.__name__ == "LocomotionEnv":
        for f in ("contact_anchor", "contact_active"):
            if f"state_{f}" not in env_snap:
                env_snap[f"state_{f}"] = None
    ts.env.restore(env_snap)
    return ts


def _fix_rng_state(state: dict) -> None:
    """JSON round-trips PCG64 state ints fine, but keys must stay ints."""
    inner = state.get("state")
    if isinstance(inner, dict):
        for k in ("state", "inc"):
            if k in inner:
                inner[k] = int(inner[k])
    if "uinteger" in state:
        state["uinteger"] = int(state["uinteger"])
