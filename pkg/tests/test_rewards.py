import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from striderl.rewards import (
    REWARD_NAMES,
    RewardError,
    RewardWeights,
    StepContext,
    base_motion_penalties,
    effort_penalties,
    evaluate_all,
    gait_rewards,
    posture_penalties,
    termination,
    tracking_rewards,
)

W = RewardWeights()
Q_DEFAULT = np.array([0.0, 0.0, -0.3, 0.6, -0.3, 0.0] * 2)


def make_ctx(n=1, **overrides) -> StepContext:
    """Quiet standing snapshot: zero command, perfect pose, both feet loaded."""
    ctx = StepContext(
        command=np.zeros((n, 3)),
        base_vel_xy=np.zeros((n, 2)),
        base_vel_z=np.zeros(n),
        yaw_rate=np.zeros(n),
        roll=np.zeros(n),
        pitch=np.zeros(n),
        roll_rate=np.zeros(n),
        pitch_rate=np.zeros(n),
        tau=np.zeros((n, 12)),
        action=np.tile(Q_DEFAULT, (n, 1)),
        prev_action=np.tile(Q_DEFAULT, (n, 1)),
        q=np.tile(Q_DEFAULT, (n, 1)),
        q_default=Q_DEFAULT,
        qd=np.zeros((n, 12)),
        qd_prev=np.zeros((n, 12)),
        qd_prev2=np.zeros((n, 12)),
        fz=np.full((n, 2), 400.0),
        foot_speed_sq=np.zeros((n, 2)),
        stance_coeff=np.ones((n, 2)),
        phase_changed=np.zeros(n, dtype=bool),
        base_xy=np.zeros((n, 2)),
        head_xy=np.zeros((n, 2)),
        base_z=np.full(n, 0.8),
    )
    for k, v in overrides.items():
        setattr(ctx, k, v)
    return ctx


# ------------------------------------------------------------- golden values

def test_perfect_tracking_gives_full_reward():
    r1, r2 = tracking_rewards(make_ctx(), W)
    assert r1[0] == pytest.approx(3.0, abs=1e-12)
    assert r2[0] == pytest.approx(3.0, abs=1e-12)


def test_tracking_half_mps_error():
    ctx = make_ctx(command=np.array([[0.5, 0.0, 0.0]]))
    r1, _ = tracking_rewards(ctx, W)
    assert r1[0] == pytest.approx(3.0 * np.exp(-1.0), abs=1e-9)


def test_tracking_vanishes_at_large_error():
    ctx = make_ctx(base_vel_xy=np.array([[50.0, 0.0]]))
    r1, _ = tracking_rewards(ctx, W)
    assert 0.0 <= r1[0] < 1e-9


def test_base_motion_zero_at_nominal():
    terms = base_motion_penalties(make_ctx(), W)
    for t in terms:
        assert t[0] == 0.0


def test_vertical_velocity_penalty():
    ctx = make_ctx(base_vel_z=np.array([0.5]))
    r3, *_ = base_motion_penalties(ctx, W)
    assert r3[0] == pytest.approx(-0.5, abs=1e-12)


def test_base_height_penalty_at_0_75():
    ctx = make_ctx(base_z=np.array([0.75]))
    *_, r17 = base_motion_penalties(ctx, W)
    assert r17[0] == pytest.approx(-0.25, abs=1e-9)


def test_effort_zero_at_rest():
    r6, r7, r14 = effort_penalties(make_ctx(), W)
    assert r6[0] == 0.0 and r7[0] == 0.0 and r14[0] == 0.0


def test_torque_penalty_single_joint():
    tau = np.zeros((1, 12))
    tau[0, 0] = 10.0
    r6, _, _ = effort_penalties(make_ctx(tau=tau), W)
    assert r6[0] == pytest.approx(-0.0002 * 20.0, abs=1e-12)


def test_action_rate_penalty():
    action = np.tile(Q_DEFAULT, (1, 1)).copy()
    action[0, 0] += 0.1
    _, r7, _ = effort_penalties(make_ctx(action=action), W)
    assert r7[0] == pytest.approx(-1e-4, abs=1e-12)


def test_velocity_rate_penalty():
    qd = np.zeros((1, 12))
    qd[0, 3] = 1.0
    _, _, r14 = effort_penalties(make_ctx(qd=qd), W)
    # first difference 1, second difference 1
    assert r14[0] == pytest.approx(-0.001 * 2.0, abs=1e-12)


def test_posture_zero_at_default_any_command():
    for cmd in ([[0.0, 0.0, 0.0]], [[0.7, 0.2, 0.3]]):
        r8, r15 = posture_penalties(make_ctx(command=np.array(cmd)), W)
        assert r8[0] == 0.0 and r15[0] == 0.0


def test_stand_still_gate_closed_when_commanded():
    q = np.tile(Q_DEFAULT, (1, 1)).copy()
    q[0, 2] += 0.2
    r8, r15 = posture_penalties(make_ctx(command=np.array([[0.5, 0.0, 0.0]]), q=q), W)
    assert r8[0] == 0.0
    assert r15[0] == pytest.approx(-0.4 * 0.04, abs=1e-12)


def test_stand_still_gate_open_at_zero_command():
    q = np.tile(Q_DEFAULT, (1, 1)).copy()
    q[0, 2] += 0.2
    r8, r15 = posture_penalties(make_ctx(q=q), W)
    assert r8[0] == pytest.approx(-0.5 * 0.2, abs=1e-12)
    assert r15[0] == pytest.approx(-0.016, abs=1e-12)


def test_gate_boundary_toggles_only_r8():
    q = np.tile(Q_DEFAULT, (1, 1)).copy()
    q[0, 0] += 0.1
    below = make_ctx(command=np.array([[0.0999, 0.0, 0.0]]), q=q)
    above = make_ctx(command=np.array([[0.1001, 0.0, 0.0]]), q=q)
    r8_b, r15_b = posture_penalties(below, W)
    r8_a, r15_a = posture_penalties(above, W)
    assert r8_b[0] < 0.0 and r8_a[0] == 0.0
    assert r15_b[0] == r15_a[0]


def test_gait_double_support_fully_loaded():
    ctx = make_ctx(fz=np.full((1, 2), 1500.0))
    r10, r11, r12, r13 = gait_rewards(ctx, W)
    assert r10[0] == pytest.approx(0.04, abs=1e-12)
    assert r11[0] == 0.0
    assert r12[0] == 0.0
    assert r13[0] == 0.0


def test_gait_loaded_during_scheduled_flight_penalized():
    ctx = make_ctx(
        fz=np.array([[300.0, 1500.0]]),
        stance_coeff=np.array([[1, -1]]),
    )
    r10, _, _, _ = gait_rewards(ctx, W)
    assert r10[0] == pytest.approx(0.02 * (300.0 / 1500.0 - 1.0), abs=1e-12)


def test_high_contact_force_penalty():
    ctx = make_ctx(fz=np.array([[1600.0, 0.0]]))
    _, _, r12, _ = gait_rewards(ctx, W)
    assert r12[0] == pytest.approx(-1.0, abs=1e-9)


def test_flight_velocity_reward_and_cap():
    ctx = make_ctx(
        stance_coeff=np.array([[1, -1]]),
        foot_speed_sq=np.array([[0.0, 0.25]]),
    )
    _, r11, _, _ = gait_rewards(ctx, W)
    assert r11[0] == pytest.approx(0.2 * 0.25 / 4.0, abs=1e-12)
    ctx.foot_speed_sq = np.array([[0.0, 100.0]])
    _, r11, _, _ = gait_rewards(ctx, W)
    assert r11[0] == pytest.approx(0.2, abs=1e-12)


def test_phase_change_bonus():
    ctx = make_ctx(phase_changed=np.array([True]))
    *_, r13 = gait_rewards(ctx, W)
    assert r13[0] == 1.0


def test_termination_low_base():
    done, r9 = termination(make_ctx(base_z=np.array([0.65])), W)
    assert done[0] and r9[0] == -1.0


def test_termination_nominal_false():
    done, r9 = termination(make_ctx(), W)
    assert not done[0] and r9[0] == 0.0


def test_termination_fallen_by_roll():
    done, r9 = termination(make_ctx(roll=np.array([0.6])), W)
    assert done[0] and r9[0] == -1.0


def test_termination_joint_limit_with_slack():
    q = np.tile(Q_DEFAULT, (1, 1)).copy()
    q[0, 0] = 0.6 + 0.04  # inside slack
    lo = np.array([-0.6, -0.45, -1.6, -0.05, -1.3, -0.45] * 2)
    hi = np.array([0.6, 0.45, 0.9, 2.3, 0.9, 0.45] * 2)
    ctx = make_ctx(q=q, q_lower=lo, q_upper=hi)
    done, _ = termination(ctx, W)
    assert not done[0]
    ctx.q[0, 0] = 0.6 + 0.06  # beyond slack
    done, r9 = termination(ctx, W)
    assert done[0] and r9[0] == -1.0


# ------------------------------------------------------------------ totality

def test_evaluate_all_total_is_exact_sum():
    rng = np.random.default_rng(0)
    ctx = make_ctx(n=16)
    ctx.q = ctx.q + rng.normal(0, 0.1, ctx.q.shape)
    ctx.tau = rng.normal(0, 40, ctx.tau.shape)
    ctx.base_vel_xy = rng.normal(0, 0.5, (16, 2))
    breakdown, _ = evaluate_all(ctx, W)
    total = sum(breakdown.terms[k] for k in REWARD_NAMES) * 0
    for k in REWARD_NAMES:
        total = total + breakdown.terms[k]
    np.testing.assert_array_equal(breakdown.total, total)


def test_evaluate_all_pure():
    ctx = make_ctx(n=4)
    b1, d1 = evaluate_all(ctx, W)
    b2, d2 = evaluate_all(ctx, W)
    np.testing.assert_array_equal(b1.as_array(), b2.as_array())
    np.testing.assert_array_equal(d1, d2)


def test_evaluate_all_terminated_includes_r9():
    ctx = make_ctx(base_z=np.array([0.6]))
    breakdown, done = evaluate_all(ctx, W)
    assert done[0]
    assert breakdown.r9[0] == -1.0


def test_evaluate_all_rejects_nonfinite():
    ctx = make_ctx(tau=np.full((1, 12), np.nan))
    with pytest.raises(RewardError):
        evaluate_all(ctx, W)


def test_standing_snapshot_composition():
    # zero command, perfect standing: tracking saturated, gait term positive
    breakdown, done = evaluate_all(make_ctx(), W)
    assert not done[0]
    assert breakdown.r1[0] == pytest.approx(3.0) and breakdown.r2[0] == pytest.approx(3.0)
    assert breakdown.r10[0] > 0.0
    for k in ("r3", "r4", "r5", "r7", "r14", "r15", "r16", "r17"):
        assert breakdown.terms[k][0] == 0.0


# ----------------------------------------------------------------- properties

@given(
    ex=st.floats(-5, 5), ey=st.floats(-5, 5),
    fz_l=st.floats(0, 5000), fz_r=st.floats(0, 5000),
    sp_l=st.floats(0, 50), sp_r=st.floats(0, 50),
    coeff=st.sampled_from([(1, 1), (1, -1), (-1, 1)]),
)
@settings(max_examples=200, deadline=None)
def test_bounds(ex, ey, fz_l, fz_r, sp_l, sp_r, coeff):
    ctx = make_ctx(
        base_vel_xy=np.array([[ex, ey]]),
        fz=np.array([[fz_l, fz_r]]),
        foot_speed_sq=np.array([[sp_l, sp_r]]),
        stance_coeff=np.array([coeff]),
    )
    b, _ = evaluate_all(ctx, W)
    assert 0.0 < b.r1[0] <= 3.0
    assert 0.0 < b.r2[0] <= 3.0
    assert -0.04 <= b.r10[0] <= 0.04
    assert -0.4 <= b.r11[0] <= 0.4
    assert b.r13[0] in (0.0, 1.0)
    assert b.r9[0] in (-1.0, 0.0)
    for k in ("r3", "r4", "r5", "r6", "r7", "r8", "r12", "r14", "r15", "r16", "r17"):
        assert b.terms[k][0] <= 0.0


@given(err=st.floats(0.01, 3.0), bump=st.floats(0.01, 1.0))
@settings(max_examples=100, deadline=None)
def test_tracking_strictly_decreasing_in_error(err, bump):
    c1 = make_ctx(base_vel_xy=np.array([[err, 0.0]]))
    c2 = make_ctx(base_vel_xy=np.array([[err + bump, 0.0]]))
    assert tracking_rewards(c2, W)[0][0] < tracking_rewards(c1, W)[0][0]


def test_mirror_symmetry_of_gait_terms():
    rng = np.random.default_rng(3)
    fz = rng.uniform(0, 2000, (8, 2))
    sp = rng.uniform(0, 8, (8, 2))
    ctx = make_ctx(n=8, fz=fz, foot_speed_sq=sp,
                   stance_coeff=np.tile([1, -1], (8, 1)))
    mirrored = make_ctx(n=8, fz=fz[:, ::-1].copy(), foot_speed_sq=sp[:, ::-1].copy(),
                        stance_coeff=np.tile([-1, 1], (8, 1)))
    r10a, r11a, *_ = gait_rewards(ctx, W)
    r10b, r11b, *_ = gait_rewards(mirrored, W)
    np.testing.assert_allclose(r10a + r11a, r10b + r11b, atol=1e-14)
