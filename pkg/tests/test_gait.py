import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from striderl.gait import (
    Foot,
    GaitSchedule,
    Segment,
    clock_signal,
    contact_coefficient,
    phase_at,
    segment_index,
    stance_coefficients,
)

DEFAULTS = GaitSchedule()


def test_default_period_is_2_2_seconds():
    assert DEFAULTS.cycle_period() == pytest.approx(2.2, abs=1e-12)


def test_schedule_rejects_nonpositive_times():
    with pytest.raises(ValueError):
        GaitSchedule(t_double_support=0.0)
    with pytest.raises(ValueError):
        GaitSchedule(t_single_support=-0.1)


def test_phase_at_cycle_start():
    seg, phi = phase_at(DEFAULTS, 0.0)
    assert seg == Segment.DOUBLE_SUPPORT_A
    assert phi == 0.0


def test_phase_at_full_period_wraps():
    seg, phi = phase_at(DEFAULTS, 2.2)
    assert seg == Segment.DOUBLE_SUPPORT_A
    assert abs(phi) < 1e-9


def test_phase_at_right_flight():
    # 0.725 / 2.2 lands between the boundaries 0.35/2.2 and 1.10/2.2
    seg, phi = phase_at(DEFAULTS, 0.725)
    assert seg == Segment.FLIGHT_RIGHT
    assert phi == pytest.approx(0.725 / 2.2, abs=1e-12)


def test_phase_rejects_bad_input():
    with pytest.raises(ValueError):
        phase_at(DEFAULTS, float("nan"))
    with pytest.raises(ValueError):
        phase_at(DEFAULTS, -0.1)


def test_clock_signal_trivial_points():
    np.testing.assert_allclose(clock_signal(DEFAULTS, 0.0), [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(clock_signal(DEFAULTS, 1.1), [0.0, -1.0], atol=1e-12)
    np.testing.assert_allclose(clock_signal(DEFAULTS, 0.55), [1.0, 0.0], atol=1e-12)


def test_clock_signal_unit_norm_batch():
    t = np.linspace(0.0, 10.0, 997)
    s = clock_signal(DEFAULTS, t)
    np.testing.assert_allclose(np.sum(s * s, axis=-1), 1.0, atol=1e-12)


def test_contact_coefficient_double_support():
    assert contact_coefficient(DEFAULTS, 0.0, Foot.RIGHT) == 1
    assert contact_coefficient(DEFAULTS, 0.0, Foot.LEFT) == 1


def test_contact_coefficient_right_flight():
    assert contact_coefficient(DEFAULTS, 0.725, Foot.RIGHT) == -1
    assert contact_coefficient(DEFAULTS, 0.725, Foot.LEFT) == 1


def test_stance_fraction_per_cycle():
    # each foot is scheduled stance for (2*0.35 + 0.75) / 2.2 of the cycle
    t = (np.arange(220000) + 0.5) * (2.2 / 220000)
    coeffs = stance_coefficients(DEFAULTS, t)
    frac = np.mean(coeffs == 1, axis=0)
    np.testing.assert_allclose(frac, 1.45 / 2.2, atol=1e-4)


@given(
    t=st.floats(min_value=0.0, max_value=1e4, allow_nan=False),
    k=st.integers(min_value=1, max_value=50),
)
@settings(max_examples=200, deadline=None)
def test_periodicity(t, k):
    period = DEFAULTS.cycle_period()
    _, phi0 = phase_at(DEFAULTS, t)
    _, phi1 = phase_at(DEFAULTS, t + k * period)
    diff = abs(phi0 - phi1)
    assert min(diff, 1.0 - diff) < 1e-9


@given(
    t_ds=st.floats(min_value=0.05, max_value=2.0),
    t_ss=st.floats(min_value=0.05, max_value=2.0),
    t=st.floats(min_value=0.0, max_value=100.0),
)
@settings(max_examples=200, deadline=None)
def test_segments_tile_unit_interval(t_ds, t_ss, t):
    sched = GaitSchedule(t_double_support=t_ds, t_single_support=t_ss)
    seg, phi = phase_at(sched, t)
    a, b, c = sched.boundaries()
    bounds = [0.0, a, b, c, 1.0]
    assert bounds[int(seg)] <= phi < bounds[int(seg) + 1]


@given(t=st.floats(min_value=0.0, max_value=1e3, allow_nan=False))
@settings(max_examples=300, deadline=None)
def test_coefficient_complementarity(t):
    left, right = stance_coefficients(DEFAULTS, t)
    assert left in (-1, 1) and right in (-1, 1)
    # never both swinging; double support means both loaded
    assert not (left == -1 and right == -1)
    idx = segment_index(DEFAULTS, t)
    if idx in (Segment.DOUBLE_SUPPORT_A, Segment.DOUBLE_SUPPORT_B):
        assert left == 1 and right == 1


def test_clock_injective_over_one_period():
    t = np.linspace(0.0, 2.2, 2048, endpoint=False)
    s = clock_signal(DEFAULTS, t)
    # distinct phases map to distinct (sin, cos) pairs
    d = np.linalg.norm(s[None, :, :] - s[:, None, :], axis=-1)
    np.fill_diagonal(d, 1.0)
    assert d.min() > 1e-6
