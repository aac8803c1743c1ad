"""Velocity-commanded bipedal locomotion on a self-contained simulator:
periodic gait clock, 17-term reward composition, batched rigid-body
dynamics, PPO training, deterministic evaluation, and a real-time teleop
service with a browser client.
"""

from .dynamics import BipedState, ContactReport, default_state, forward_kinematics, step_dynamics
from .env import CommandRanges, EnvConfig, LocomotionEnv, Transition, build_observation
from .gait import Foot, GaitSchedule, Segment, clock_signal, contact_coefficient, phase_at
from .model import KinematicModel, PDGains, default_biped, make_pendulum
from .rewards import RewardBreakdown, RewardWeights, StepContext, evaluate_all
from .spatial import projected_gravity

__all__ = [
    "BipedState",
    "CommandRanges",
    "ContactReport",
    "EnvConfig",
    "Foot",
    "GaitSchedule",
    "KinematicModel",
    "LocomotionEnv",
    "PDGains",
    "RewardBreakdown",
    "RewardWeights",
    "Segment",
    "StepContext",
    "Transition",
    "build_observation",
    "clock_signal",
    "contact_coefficient",
    "default_biped",
    "default_state",
    "evaluate_all",
    "forward_kinematics",
    "make_pendulum",
    "phase_at",
    "projected_gravity",
    "step_dynamics",
]
