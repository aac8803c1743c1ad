import os

import numpy as np
import pytest

from striderl.nets import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    Adam,
    Mlp,
    RunningNorm,
    gaussian_entropy,
    gaussian_log_prob,
)
from striderl.ppo import (
    CheckpointError,
    NumericalError,
    PpoConfig,
    collect_rollout,
    compute_gae,
    init_trainer,
    load_checkpoint,
    loss_and_grads,
    ppo_update,
    save_checkpoint,
    train,
)


def pendulum_sections(**train_overrides):
    from striderl.configs import merge_section

    sections = {k: merge_section(k, None) for k in ("model", "env", "rewards", "train")}
    sections["train"].update(task="pendulum", num_envs=4, rollout_steps=16,
                             minibatches=4, total_steps=4 * 16 * 4, seed=1)
    sections["train"].update(train_overrides)
    return sections


# ------------------------------------------------------------------ GAE

def gae_bruteforce(rewards, values, dones, gamma, lam, bootstrap, terminal_values):
    """Independent oracle: explicit sum A_t = sum_k (gamma*lam)^k delta_{t+k},
    cut at episode boundaries."""
    t_steps, n = rewards.shape
    adv = np.zeros_like(rewards)
    for e in range(n):
        for t in range(t_steps):
            acc = 0.0
            coef = 1.0
            for k in range(t, t_steps):
                v_next = bootstrap[e] if k == t_steps - 1 else values[k + 1, e]
                if dones[k, e]:
                    v_next = terminal_values[k, e]
                delta = rewards[k, e] + gamma * v_next - values[k, e]
                acc += coef * delta
                if dones[k, e]:
                    break
                coef *= gamma * lam
            adv[t, e] = acc
            if dones[t, e]:
                continue
    return adv


def test_gae_matches_bruteforce_1000_cases():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        t_steps = int(rng.integers(1, 11))
        n = int(rng.integers(1, 4))
        rewards = rng.normal(size=(t_steps, n))
        values = rng.normal(size=(t_steps, n))
        dones = rng.random((t_steps, n)) < 0.25
        gamma = float(rng.uniform(0.5, 1.0))
        lam = float(rng.uniform(0.0, 1.0))
        bootstrap = rng.normal(size=n)
        tvals = rng.normal(size=(t_steps, n)) * dones
        adv, targets = compute_gae(rewards, values, dones, gamma, lam,
                                   bootstrap=bootstrap, terminal_values=tvals)
        ref = gae_bruteforce(rewards, values, dones, gamma, lam, bootstrap, tvals)
        np.testing.assert_allclose(adv, ref, atol=1e-10)
        np.testing.assert_allclose(targets, adv + values, atol=1e-12)


def test_gae_lambda_zero_is_one_step_td():
    rng = np.random.default_rng(1)
    rewards = rng.normal(size=(6, 2))
    values = rng.normal(size=(6, 2))
    dones = np.zeros((6, 2), dtype=bool)
    bootstrap = rng.normal(size=2)
    adv, _ = compute_gae(rewards, values, dones, 0.9, 0.0, bootstrap=bootstrap)
    v_next = np.vstack([values[1:], bootstrap[None, :]])
    np.testing.assert_allclose(adv, rewards + 0.9 * v_next - values, atol=1e-12)


def test_gae_lambda_one_gamma_one_telescopes():
    rng = np.random.default_rng(2)
    rewards = rng.normal(size=(5, 3))
    values = rng.normal(size=(5, 3))
    dones = np.zeros((5, 3), dtype=bool)
    bootstrap = rng.normal(size=3)
    adv, _ = compute_gae(rewards, values, dones, 1.0, 1.0, bootstrap=bootstrap)
    for t in range(5):
        expected = rewards[t:].sum(axis=0) + bootstrap - values[t]
        np.testing.assert_allclose(adv[t], expected, atol=1e-10)


# ------------------------------------------------------- gradient oracle

def flatten(params):
    return np.concatenate([p.ravel() for p in params])


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    policy = Mlp(3, (4, 4), 2, rng, final_gain=0.01)
    value = Mlp(3, (4, 4), 1, rng, final_gain=1.0)
    log_std = rng.uniform(-1.0, 0.0, 2)
    params = policy.params + [log_std] + value.params

    m = 16
    obs = rng.normal(size=(m, 3))
    mean0 = policy.forward(obs)
    actions = mean0 + np.exp(log_std) * rng.normal(size=(m, 2))
    logp_old = gaussian_log_prob(mean0, log_std, actions) + rng.normal(0, 0.1, m)
    adv = rng.normal(size=m)
    targets = rng.normal(size=m)

    def loss_fn():
        loss, _, _ = loss_and_grads(policy, value, log_std, obs, actions,
                                    logp_old, adv, targets, 0.2, 0.5, 0.01)
        return loss

    _, grads, _ = loss_and_grads(policy, value, log_std, obs, actions,
                                 logp_old, adv, targets, 0.2, 0.5, 0.01)
    analytic = flatten(grads)

    h = 1e-6
    numeric = np.empty_like(analytic)
    k = 0
    for p in params:
        flat = p.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lo_plus = loss_fn()
            flat[i] = orig - h
            lo_minus = loss_fn()
            flat[i] = orig
            numeric[k] = (lo_plus - lo_minus) / (2 * h)
            k += 1
    denom = np.maximum(np.abs(numeric), 1e-6)
    rel = np.abs(analytic - numeric) / denom
    assert rel.max() < 1e-4


def test_surrogate_equals_unclipped_inside_trust_region():
    rng = np.random.default_rng(3)
    ratio = rng.uniform(0.85, 1.15, 256)
    adv = rng.normal(size=256)
    s1 = ratio * adv
    s2 = np.clip(ratio, 0.8, 1.2) * adv
    np.testing.assert_array_equal(np.minimum(s1, s2), s1)


# ------------------------------------------------- distribution analytics

def test_log_prob_normalizes_and_entropy_matches_quadrature():
    mu, log_std = 0.3, -0.4
    sigma = np.exp(log_std)
    xs = np.linspace(mu - 12 * sigma, mu + 12 * sigma, 200_001)
    logp = np.array([
        gaussian_log_prob(np.array([[mu]]), np.array([log_std]), np.array([[x]]))[0]
        for x in xs[:: 1000]
    ])
    # spot check against the closed form on a coarse grid
    dense = gaussian_log_prob(
        np.full((xs.size, 1), mu), np.array([log_std]), xs[:, None]
    )
    p = np.exp(dense)
    total = np.trapezoid(p, xs)
    assert abs(total - 1.0) < 1e-6
    ent_num = np.trapezoid(-p * dense, xs)
    assert abs(ent_num - gaussian_entropy(np.array([log_std]))) < 1e-6
    assert np.allclose(logp, dense[::1000], atol=1e-12)


def test_running_norm_matches_batch_statistics():
    rng = np.random.default_rng(4)
    data = rng.normal(3.0, 2.0, size=(1000, 5))
    norm = RunningNorm(5)
    for chunk in np.split(data, 10):
        norm.update(chunk)
    np.testing.assert_allclose(norm.mean, data.mean(axis=0), atol=1e-8)
    np.testing.assert_allclose(norm.var, data.var(axis=0), rtol=1e-3)


def test_adam_lr_zero_is_noop():
    rng = np.random.default_rng(5)
    p = rng.normal(size=(4, 3))
    before = p.copy()
    opt = Adam([p], lr=0.0)
    opt.step([p], [rng.normal(size=(4, 3))])
    np.testing.assert_array_equal(p, before)


# ------------------------------------------------------------- trainer

def test_collect_rollout_single_step_single_env():
    ts = init_trainer(pendulum_sections(num_envs=1, rollout_steps=1,
                                        minibatches=1, total_steps=1))
    buf = collect_rollout(ts, steps=1)
    assert buf.obs.shape == (1, 1, 3)
    assert buf.actions.shape == (1, 1, 1)
    assert buf.log_probs.shape == (1, 1)


def test_recorded_log_prob_self_consistent():
    ts = init_trainer(pendulum_sections())
    buf = collect_rollout(ts)
    for t in range(buf.obs.shape[0]):
        mean = ts.policy.forward(buf.obs[t])
        logp = gaussian_log_prob(mean, ts.clamped_log_std(), buf.actions[t])
        np.testing.assert_allclose(logp, buf.log_probs[t], atol=1e-6)


def test_rollout_deterministic_under_seed():
    a = collect_rollout(init_trainer(pendulum_sections()))
    b = collect_rollout(init_trainer(pendulum_sections()))
    np.testing.assert_array_equal(a.obs, b.obs)
    np.testing.assert_array_equal(a.actions, b.actions)
    np.testing.assert_array_equal(a.rewards, b.rewards)


def test_zero_advantages_leave_policy_net_untouched():
    ts = init_trainer(pendulum_sections())
    buf = collect_rollout(ts)
    buf.rewards[:] = 0.0
    buf.values[:] = 0.0
    buf.bootstrap[:] = 0.0
    buf.terminal_values[:] = 0.0
    w_before = [w.copy() for w in ts.policy.weights]
    std_before = ts.log_std.copy()
    ppo_update(ts, buf)
    for w, before in zip(ts.policy.weights, w_before):
        np.testing.assert_array_equal(w, before)
    assert not np.array_equal(ts.log_std, std_before)  # entropy still acts


def test_update_stats_sane():
    ts = init_trainer(pendulum_sections())
    stats = ppo_update(ts, collect_rollout(ts))
    assert 0.0 <= stats["clip_fraction"] <= 1.0
    assert np.isfinite(stats["approx_kl"])
    assert np.isfinite(stats["policy_loss"])


def test_nonfinite_loss_aborts_and_restores():
    ts = init_trainer(pendulum_sections())
    buf = collect_rollout(ts)
    buf.rewards[0, 0] = np.nan
    before = [p.copy() for p in ts.params]
    with pytest.raises(NumericalError):
        ppo_update(ts, buf)
    for p, b in zip(ts.params, before):
        np.testing.assert_array_equal(p, b)


# --------------------------------------------------------- checkpointing

def test_checkpoint_roundtrip_bitwise(tmp_path):
    ts = init_trainer(pendulum_sections())
    ppo_update(ts, collect_rollout(ts))
    path = tmp_path / "ck.npz"
    save_checkpoint(ts, str(path))
    ts2 = load_checkpoint(str(path))
    for p, q in zip(ts.params, ts2.params):
        np.testing.assert_array_equal(p, q)
    for m, m2 in zip(ts.opt.m, ts2.opt.m):
        np.testing.assert_array_equal(m, m2)
    assert ts.opt.t == ts2.opt.t
    assert ts.env_steps == ts2.env_steps


def test_checkpoint_tamper_detected(tmp_path):
    ts = init_trainer(pendulum_sections())
    path = tmp_path / "ck.npz"
    save_checkpoint(ts, str(path))
    raw = bytearray(path.read_bytes())
    raw[-20] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))


def test_resume_is_bit_exact(tmp_path):
    """Training straight through equals save/load/continue, metrics included."""
    sections = pendulum_sections(total_steps=6 * 4 * 16, checkpoint_every=3)

    out_a = tmp_path / "straight"
    train(sections, out_dir=str(out_a))
    metrics_a = (out_a / "metrics.csv").read_text()

    out_b = tmp_path / "resumed"
    half = pendulum_sections(total_steps=3 * 4 * 16, checkpoint_every=3)
    train(half, out_dir=str(out_b))
    ck = out_b / "ckpt_000003.npz"
    ts = load_checkpoint(str(ck))
    ts.config.total_steps = 6 * 4 * 16
    import csv as _csv
    rows = []
    from striderl.ppo import METRIC_COLUMNS, _fmt
    while ts.env_steps < ts.config.total_steps:
        buf = collect_rollout(ts)
        upd = ppo_update(ts, buf)
        row = {**buf.stats, **upd, "update": ts.updates, "env_steps": ts.env_steps}
        rows.append([_fmt(row.get(c, "")) for c in METRIC_COLUMNS])

    tail_a = metrics_a.strip().splitlines()[-3:]
    tail_b = [",".join(r) for r in rows]
    assert tail_a == tail_b


def test_train_smoke_writes_artifacts(tmp_path):
    sections = pendulum_sections(total_steps=2 * 4 * 16, checkpoint_every=1)
    out = tmp_path / "run"
    summary = train(sections, out_dir=str(out))
    assert summary["updates"] == 2
    assert os.path.exists(summary["metrics_csv"])
    with open(summary["metrics_csv"]) as fh:
        lines = fh.read().strip().splitlines()
    assert len(lines) == 1 + 2  # header + one row per update
    assert any(p.endswith("ckpt_final.npz") for p in summary["checkpoints"])


def test_train_determinism_metrics_identical(tmp_path):
    sections = pendulum_sections(total_steps=3 * 4 * 16)
    a = tmp_path / "a"
    b = tmp_path / "b"
    train(sections, out_dir=str(a))
    train(sections, out_dir=str(b))
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()


def test_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(num_envs=3, rollout_steps=5, minibatches=4)
    with pytest.raises(ValueError):
        PpoConfig(task="walker")
