"""Periodic gait clock: cycle phase, clock observation, stance/flight indicators.

One gait cycle is double support -> right-foot flight -> double support ->
left-foot flight. All functions are pure in (schedule, t) and accept scalar
or array times, so a batch of environments can share one schedule.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaitSchedule",
    "Segment",
    "Foot",
    "phase_at",
    "segment_index",
    "clock_signal",
    "contact_coefficient",
    "stance_coefficients",
]


class Segment(enum.IntEnum):
    """Segments of one gait cycle, in time order."""

    DOUBLE_SUPPORT_A = 0
    FLIGHT_RIGHT = 1
    DOUBLE_SUPPORT_B = 2
    FLIGHT_LEFT = 3


class Foot(enum.IntEnum):
    LEFT = 0
    RIGHT = 1


@dataclass(frozen=True)
class GaitSchedule:
    """Timing of the stepping cycle.

    The cycle is two double-support intervals and two single-support
    intervals, so the period is 2 * (t_double_support + t_single_support).
    """

    t_double_support: float = 0.35
    t_single_support: float = 0.75

    def __post_init__(self) -> None:
        if not (self.t_double_support > 0 and np.isfinite(self.t_double_support)):
            raise ValueError(f"t_double_support must be positive, got {self.t_double_support}")
        if not (self.t_single_support > 0 and np.isfinite(self.t_single_support)):
            raise ValueError(f"t_single_support must be positive, got {self.t_single_support}")

    def cycle_period(self) -> float:
        return 2.0 * (self.t_double_support + self.t_single_support)

    def boundaries(self) -> tuple[float, float, float]:
        """Cycle fractions (a, b, c) where segments switch.

        Segments tile [0, 1) as [0, a), [a, b), [b, c), [c, 1).
        """
        period = self.cycle_period()
        a = self.t_double_support / period
        b = (self.t_double_support + self.t_single_support) / period
        c = (2.0 * self.t_double_support + self.t_single_support) / period
        return a, b, c


def _cycle_fraction(schedule: GaitSchedule, t):
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ValueError("time must be finite")
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    period = schedule.cycle_period()
    phi = np.mod(t, period) / period
    # mod can return exactly `period` when t is a hair below a multiple of it
    return np.where(phi >= 1.0, 0.0, phi)


def segment_index(schedule: GaitSchedule, t):
    """Segment enum value for time(s) t, as an int array (scalar in, scalar out)."""
    phi = _cycle_fraction(schedule, t)
    a, b, c = schedule.boundaries()
    idx = np.searchsorted([a, b, c], phi, side="right")
    if np.ndim(t) == 0:
        return int(idx)
    return idx.astype(np.int64)


def phase_at(schedule: GaitSchedule, t: float) -> tuple[Segment, float]:
    """Segment and cycle fraction phi in [0, 1) at time t."""
    phi = float(_cycle_fraction(schedule, t))
    return Segment(segment_index(schedule, t)), phi


def clock_signal(schedule: GaitSchedule, t):
    """2-dim clock observation (sin 2*pi*phi, cos 2*pi*phi).

    Continuous in t and injective over one period, so the phase is
    unambiguous to the policy.
    """
    phi = _cycle_fraction(schedule, t)
    angle = 2.0 * np.pi * phi
    return np.stack([np.sin(angle), np.cos(angle)], axis=-1)


def stance_coefficients(schedule: GaitSchedule, t):
    """Stance indicator for (left, right) feet: +1 scheduled stance, -1 flight.

    Both feet are in stance during double support; the left foot carries the
    load while the right swings, and vice versa. The flight indicator is the
    negation of the stance indicator.
    """
    idx = np.asarray(segment_index(schedule, t))
    left = np.where(idx == Segment.FLIGHT_LEFT, -1, 1)
    right = np.where(idx == Segment.FLIGHT_RIGHT, -1, 1)
    return np.stack([left, right], axis=-1).astype(np.int64)


def contact_coefficient(schedule: GaitSchedule, t: float, foot: Foot) -> int:
    """+1 when `foot` is scheduled to bear load at time t, -1 when swinging."""
    coeffs = stance_coefficients(schedule, t)
    return int(coeffs[int(foot)])
