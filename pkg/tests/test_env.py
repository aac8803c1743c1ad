import numpy as np
import pytest

from striderl.env import (
    OBS_DIM,
    CommandRanges,
    EnvConfig,
    LocomotionEnv,
    build_observation,
    sample_command,
)
from striderl.model import default_biped

MODEL = default_biped()


def make_env(num_envs=1, seed=0, **cfg):
    return LocomotionEnv(model=MODEL, config=EnvConfig(**cfg), num_envs=num_envs, seed=seed)


def test_observation_dimension_layout():
    assert OBS_DIM == 1 + 3 + 3 + 12 + 12 + 12 + 2 == 45
    env = make_env()
    obs = env.reset()
    assert obs.shape == (1, 45)
    assert np.all(np.isfinite(obs))


def test_reset_determinism():
    a = make_env(num_envs=3, seed=42).reset()
    b = make_env(num_envs=3, seed=42).reset()
    np.testing.assert_array_equal(a, b)


def test_reset_observation_contents():
    env = make_env(seed=7)
    obs = env.reset()
    np.testing.assert_allclose(obs[0, 4:7], env.command[0] * [2.0, 2.0, 0.25], atol=1e-15)
    np.testing.assert_allclose(obs[0, 43:45], [0.0, 1.0], atol=1e-15)  # clock at t=0
    np.testing.assert_array_equal(obs[0, 31:43], 0.0)  # no action yet


def test_observation_scalings():
    env = make_env()
    env.reset()
    state = env.state.copy()
    state.base_angvel[0, 2] = 1.0
    obs = build_observation(
        state,
        np.array([[1.0, 0.3, 0.5]]),
        np.array([[0.0, 1.0]]),
        np.zeros((1, 12)),
        MODEL.q_default,
    )
    assert obs[0, 0] == pytest.approx(0.25)
    np.testing.assert_allclose(obs[0, 4:7], [2.0, 0.6, 0.125], atol=1e-15)


def test_zero_state_observation_only_gravity_and_clock():
    env = make_env()
    env.reset()
    state = env.state.copy()
    state.base_angvel[:] = 0.0
    state.q[:] = MODEL.q_default
    state.qd[:] = 0.0
    obs = build_observation(
        state, np.zeros((1, 3)), np.array([[0.0, 1.0]]), np.zeros((1, 12)), MODEL.q_default
    )
    assert obs[0, 0] == 0.0
    np.testing.assert_allclose(obs[0, 1:4], [0.0, 0.0, -1.0], atol=1e-12)
    np.testing.assert_array_equal(obs[0, 4:7], 0.0)
    np.testing.assert_array_equal(obs[0, 7:43], 0.0)
    np.testing.assert_allclose(obs[0, 43:45], [0.0, 1.0], atol=1e-15)


def test_zero_action_keeps_standing_one_second():
    env = make_env(seed=3)
    env.reset()
    env.set_command(np.zeros(3))
    env.auto_resample = False
    for _ in range(50):
        tr = env.step(np.zeros((1, 12)))
        assert not tr.terminated[0] and not tr.truncated[0]
    assert abs(env.state.base_pos[0, 2] - 0.796) < 0.05


def test_termination_below_height_threshold():
    env = make_env(seed=1)
    env.reset()
    env.state.base_pos[0, 2] = 0.65  # force the base low in the harness
    tr = env.step(np.zeros((1, 12)))
    assert tr.terminated[0]
    assert tr.breakdown.r9[0] == -1.0


def test_truncation_at_episode_cap():
    env = make_env(seed=3, max_episode_steps=5)
    env.reset()
    env.set_command(np.zeros(3))
    env.auto_resample = False
    for i in range(4):
        tr = env.step(np.zeros((1, 12)))
        assert not tr.truncated[0]
    tr = env.step(np.zeros((1, 12)))
    assert tr.truncated[0] and not tr.terminated[0]


def test_sample_command_zero_probability_one():
    rng = np.random.default_rng(0)
    ranges = CommandRanges(p_zero=1.0)
    np.testing.assert_array_equal(sample_command(rng, ranges), np.zeros(3))


def test_sample_command_statistics():
    rng = np.random.default_rng(123)
    ranges = CommandRanges()
    n = 100_000
    draws = np.stack([sample_command(rng, ranges) for _ in range(n)])
    lo, hi = ranges.lows(), ranges.highs()
    assert np.all(draws >= lo - 1e-12) and np.all(draws <= hi + 1e-12)
    # mean of the mixture: (1 - p_zero) * midpoint
    mid = (lo + hi) / 2.0
    expected = (1.0 - ranges.p_zero) * mid
    width = hi - lo
    var = (1.0 - ranges.p_zero) * (width**2 / 12.0 + mid**2) - expected**2
    se = np.sqrt(var / n)
    assert np.all(np.abs(draws.mean(axis=0) - expected) < 3.0 * se + 1e-12)


def test_sample_command_reproducible():
    a = [sample_command(np.random.default_rng(5), CommandRanges()) for _ in range(10)]
    b = [sample_command(np.random.default_rng(5), CommandRanges()) for _ in range(10)]
    np.testing.assert_array_equal(np.stack(a), np.stack(b))


def test_set_command_clamps():
    env = make_env()
    env.reset()
    applied = env.set_command(np.array([2.0, -1.0, 0.2]))
    np.testing.assert_allclose(applied, [1.0, -0.3, 0.2], atol=1e-15)
    np.testing.assert_allclose(env.command[0], [1.0, -0.3, 0.2], atol=1e-15)


def test_vec_equals_individual_envs_bitwise():
    seeds = [101, 202]
    batch = LocomotionEnv(model=MODEL, num_envs=2, seed=seeds)
    obs_b = batch.reset()
    rng = np.random.default_rng(9)
    actions = rng.uniform(-0.5, 0.5, (12, 2, 12))

    singles = [LocomotionEnv(model=MODEL, num_envs=1, seed=[s]) for s in seeds]
    obs_s = np.concatenate([e.reset() for e in singles])
    np.testing.assert_array_equal(obs_b, obs_s)

    for t in range(12):
        tr_b = batch.step(actions[t])
        tr_s = [e.step(actions[t, k : k + 1]) for k, e in enumerate(singles)]
        np.testing.assert_array_equal(tr_b.observation[0], tr_s[0].observation[0])
        np.testing.assert_array_equal(tr_b.observation[1], tr_s[1].observation[0])
        np.testing.assert_array_equal(tr_b.reward, np.concatenate([t.reward for t in tr_s]))
        np.testing.assert_array_equal(
            tr_b.terminated, np.concatenate([t.terminated for t in tr_s])
        )


def test_step_determinism_full_trajectory():
    def run():
        env = make_env(num_envs=2, seed=77)
        env.reset()
        rng = np.random.default_rng(4)
        rows = []
        for _ in range(30):
            tr = env.step(rng.uniform(-0.8, 0.8, (2, 12)))
            rows.append(np.concatenate([tr.observation.ravel(), tr.reward]))
        return np.stack(rows)

    np.testing.assert_array_equal(run(), run())


def test_auto_reset_restores_reset_postconditions():
    env = make_env(seed=11)
    env.reset()
    env.state.base_pos[0, 2] = 0.5  # guarantee termination this step
    tr = env.step(np.zeros((1, 12)))
    assert tr.terminated[0]
    assert "terminal_observation" in tr.info
    # returned observation is the post-reset one
    np.testing.assert_allclose(tr.observation[0, 43:45], [0.0, 1.0], atol=1e-15)
    np.testing.assert_array_equal(tr.observation[0, 31:43], 0.0)
    assert env._episode_steps[0] == 0
    assert env.state.base_pos[0, 2] > 0.7
    # and the first step after auto-reset has no action-rate penalty
    tr2 = env.step(np.full((1, 12), 0.3))
    assert tr2.breakdown.r7[0] == 0.0


def test_first_step_rate_penalties_zero_after_reset():
    env = make_env(seed=13)
    env.reset()
    tr = env.step(np.full((1, 12), 0.4))
    assert tr.breakdown.r7[0] == 0.0
    tr2 = env.step(np.zeros((1, 12)))
    assert tr2.breakdown.r7[0] < 0.0


def test_commands_never_leave_ranges_during_rollout():
    env = make_env(num_envs=4, seed=21)
    env.reset()
    lo, hi = env.config.commands.lows(), env.config.commands.highs()
    rng = np.random.default_rng(0)
    for _ in range(40):
        env.step(rng.uniform(-1, 1, (4, 12)))
        assert np.all(env.command >= lo - 1e-12) and np.all(env.command <= hi + 1e-12)


def test_nonfinite_action_rejected():
    env = make_env()
    env.reset()
    bad = np.zeros((1, 12))
    bad[0, 3] = np.nan
    with pytest.raises(ValueError):
        env.step(bad)


def test_env_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(control_dt=0.2, substeps=10)  # physics dt too large
    with pytest.raises(ValueError):
        CommandRanges(vx=(1.0, -1.0))
    cfg = EnvConfig()
    assert cfg.physics_dt * cfg.substeps == cfg.control_dt
