"""The 17-term reward composition and the early-termination rule.

Every term is evaluated batched and pure: the same StepContext always
produces the same breakdown. Signs live in the formulas; the weight table
is positive. Tracking velocities are heading-frame (the command is
interpreted in the robot's yaw frame). Stance/flight indicators come in as
signed coefficients from the gait clock; forces and foot speeds are
normalized by their caps so the indicator terms stay bounded.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

__all__ = [
    "RewardWeights",
    "StepContext",
    "RewardBreakdown",
    "RewardError",
    "REWARD_NAMES",
    "tracking_rewards",
    "base_motion_penalties",
    "effort_penalties",
    "posture_penalties",
    "gait_rewards",
    "termination",
    "evaluate_all",
]

REWARD_NAMES = tuple(f"r{i}" for i in range(1, 18))


class RewardError(RuntimeError):
    """A reward term came out non-finite; the simulator diverged upstream."""


@dataclass
class RewardWeights:
    w1: float = 3.0      # linear velocity tracking
    w2: float = 3.0      # yaw rate tracking
    w3: float = 2.0      # vertical base velocity
    w4: float = 0.1      # roll/pitch rate
    w5: float = 10.0     # roll/pitch angle
    w6: float = 0.0002   # torque magnitude
    w7: float = 0.01     # action rate
    w8: float = 0.5      # stand-still pose hold
    w9: float = 1.0      # early termination
    w10: float = 0.02    # stance contact indicator
    w11: float = 0.2     # flight velocity indicator
    w12: float = 0.01    # contact force above the cap
    w13: float = 1.0     # gait phase transition
    w14: float = 0.001   # joint velocity rate
    w15: float = 0.4     # pose bias
    w16: float = 2.0     # head over base
    w17: float = 100.0   # base height
    tracking_sigma: float = 0.25
    f_max: float = 1500.0
    v_cap: float = 2.0
    z_ref: float = 0.8
    z_terminate: float = 0.7
    stand_still_threshold: float = 0.1
    fall_angle: float = 0.5

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be positive")


@dataclass
class StepContext:
    """Everything the reward terms consume, aligned to one control step.

    Planar base velocity and yaw rate are heading-frame. Histories are
    aligned so that `qd_prev`/`qd_prev2` equal `qd` right after a reset
    (first-step rate penalties are zero by construction).
    """

    command: np.ndarray          # (n, 3) commanded (vx, vy, yaw rate)
    base_vel_xy: np.ndarray      # (n, 2)
    base_vel_z: np.ndarray       # (n,)
    yaw_rate: np.ndarray         # (n,)
    roll: np.ndarray             # (n,)
    pitch: np.ndarray            # (n,)
    roll_rate: np.ndarray        # (n,)
    pitch_rate: np.ndarray       # (n,)
    tau: np.ndarray              # (n, 12)
    action: np.ndarray           # (n, 12) joint position targets (A_t)
    prev_action: np.ndarray      # (n, 12) A_{t-1}
    q: np.ndarray                # (n, 12)
    q_default: np.ndarray        # (12,)
    qd: np.ndarray               # (n, 12)
    qd_prev: np.ndarray          # (n, 12)
    qd_prev2: np.ndarray         # (n, 12)
    fz: np.ndarray               # (n, 2) per-foot normal force
    foot_speed_sq: np.ndarray    # (n, 2)
    stance_coeff: np.ndarray     # (n, 2) +1 scheduled stance, -1 flight
    phase_changed: np.ndarray    # (n,) bool
    base_xy: np.ndarray          # (n, 2)
    head_xy: np.ndarray          # (n, 2)
    base_z: np.ndarray           # (n,)
    q_lower: np.ndarray = field(default=None)  # joint limits for termination
    q_upper: np.ndarray = field(default=None)
    limit_slack: float = 0.05


@dataclass
class RewardBreakdown:
    terms: dict
    total: np.ndarray

    def __getattr__(self, name):
        try:
            return self.__dict__["terms"][name]
        except KeyError:
            raise AttributeError(name) from None

    def as_array(self) -> np.ndarray:
        """(n, 18): r1..r17 then the total, in fixed order."""
        cols = [self.terms[k] for k in REWARD_NAMES] + [self.total]
        return np.stack(cols, axis=-1)


def tracking_rewards(ctx: StepContext, w: RewardWeights):
    err_xy = (ctx.command[:, 0] - ctx.base_vel_xy[:, 0]) ** 2 + (
        ctx.command[:, 1] - ctx.base_vel_xy[:, 1]
    ) ** 2
    r1 = w.w1 * np.exp(-err_xy / w.tracking_sigma)
    r2 = w.w2 * np.exp(-((ctx.command[:, 2] - ctx.yaw_rate) ** 2) / w.tracking_sigma)
    return r1, r2


def base_motion_penalties(ctx: StepContext, w: RewardWeights):
    r3 = -w.w3 * ctx.base_vel_z**2
    r4 = -w.w4 * (ctx.roll_rate**2 + ctx.pitch_rate**2)
    r5 = -w.w5 * (ctx.roll**2 + ctx.pitch**2)
    r16 = -w.w16 * np.sum((ctx.base_xy - ctx.head_xy) ** 2, axis=-1)
    r17 = -w.w17 * (ctx.base_z - w.z_ref) ** 2
    return r3, r4, r5, r16, r17


def effort_penalties(ctx: StepContext, w: RewardWeights):
    r6 = -w.w6 * (np.sqrt(np.sum(ctx.tau**2, axis=-1)) + np.sum(np.abs(ctx.tau), axis=-1))
    r7 = -w.w7 * np.sum((ctx.action - ctx.prev_action) ** 2, axis=-1)
    r14 = -w.w14 * (
        np.sum((ctx.qd - ctx.qd_prev) ** 2, axis=-1)
        + np.sum((ctx.qd - 2.0 * ctx.qd_prev + ctx.qd_prev2) ** 2, axis=-1)
    )
    return r6, r7, r14


def posture_penalties(ctx: StepContext, w: RewardWeights):
    dq = ctx.q - ctx.q_default
    r15 = -w.w15 * np.sum(dq**2, axis=-1)
    still = np.linalg.norm(ctx.command, axis=-1) < w.stand_still_threshold
    r8 = np.where(still, -w.w8 * np.sum(np.abs(dq), axis=-1), 0.0)
    return r8, r15


def gait_rewards(ctx: StepContext, w: RewardWeights):
    flight_coeff = -ctx.stance_coeff
    fz_norm = np.minimum(ctx.fz, w.f_max) / w.f_max
    r10 = w.w10 * np.sum(ctx.stance_coeff * fz_norm, axis=-1)
    v_cap_sq = w.v_cap**2
    speed_norm = np.minimum(ctx.foot_speed_sq, v_cap_sq) / v_cap_sq
    r11 = w.w11 * np.sum(flight_coeff * speed_norm, axis=-1)
    r12 = -w.w12 * np.sum(np.maximum(0.0, ctx.fz - w.f_max), axis=-1)
    r13 = np.where(ctx.phase_changed, w.w13, 0.0)
    return r10, r11, r12, r13


def termination(ctx: StepContext, w: RewardWeights):
    """Episode-ending predicate and its penalty.

    Ends on low base height, a joint outside its range beyond the
    integrator slack, or falling (roll/pitch past the documented angle).
    """
    done = ctx.base_z < w.z_terminate
    done = done | (np.abs(ctx.roll) > w.fall_angle) | (np.abs(ctx.pitch) > w.fall_angle)
    if ctx.q_lower is not None:
        beyond = (ctx.q > ctx.q_upper + ctx.limit_slack) | (ctx.q < ctx.q_lower - ctx.limit_slack)
        done = done | beyond.any(axis=-1)
    r9 = np.where(done, -w.w9, 0.0)
    return done, r9


def evaluate_all(ctx: StepContext, w: RewardWeights):
    """All 17 terms plus the termination flag; total is the plain sum.

    Raises RewardError if anything is non-finite, which indicates the
    simulator diverged upstream.
    """
    r1, r2 = tracking_rewards(ctx, w)
    r3, r4, r5, r16, r17 = base_motion_penalties(ctx, w)
    r6, r7, r14 = effort_penalties(ctx, w)
    r8, r15 = posture_penalties(ctx, w)
    r10, r11, r12, r13 = gait_rewards(ctx, w)
    done, r9 = termination(ctx, w)
    terms = {
        "r1": r1, "r2": r2, "r3": r3, "r4": r4, "r5": r5, "r6": r6,
        "r7": r7, "r8": r8, "r9": r9, "r10": r10, "r11": r11, "r12": r12,
        "r13": r13, "r14": r14, "r15": r15, "r16": r16, "r17": r17,
    }
    total = np.zeros_like(r1)
    for name in REWARD_NAMES:
        if not np.all(np.isfinite(terms[name])):
            raise RewardError(f"non-finite reward term {name}")
        total = total + terms[name]
    return RewardBreakdown(terms=terms, total=total), done
