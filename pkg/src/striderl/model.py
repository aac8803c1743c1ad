"""Rigid-body model of the simplified biped: a floating base carrying the
lumped upper body, and two 6-joint legs (hip yaw/roll/pitch, knee pitch,
ankle pitch, ankle roll).

The tree is restricted to serial chains hanging off the base, which covers
both the biped and the single-link test models. All parameters live in a
plain dict (the documented config schema) so they can be loaded from file;
`KinematicModel.from_params` precomputes everything the simulator needs.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .spatial import axis_angle_matrix, skew

__all__ = [
    "PDGains",
    "ContactParams",
    "KinematicModel",
    "default_biped_params",
    "default_biped",
    "make_pendulum",
    "derive_pd_gains",
]

MODEL_SCHEMA_ID = "striderl/model@1"

# joint order within one leg, hip to ankle
LEG_JOINT_NAMES = ("hip_yaw", "hip_roll", "hip_pitch", "knee_pitch", "ankle_pitch", "ankle_roll")
LEG_AXES = {
    "hip_yaw": (0.0, 0.0, 1.0),
    "hip_roll": (1.0, 0.0, 0.0),
    "hip_pitch": (0.0, 1.0, 0.0),
    "knee_pitch": (0.0, 1.0, 0.0),
    "ankle_pitch": (0.0, 1.0, 0.0),
    "ankle_roll": (1.0, 0.0, 0.0),
}


@dataclass
class PDGains:
    """Joint-space position control gains, one entry per joint."""

    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self) -> None:
        self.kp = np.asarray(self.kp, dtype=np.float64)
        self.kd = np.asarray(self.kd, dtype=np.float64)
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ValueError("PD gains must be non-negative")


@dataclass
class ContactParams:
    """Penalty ground contact per foot corner: spring-damper normal force,
    anchor-spring tangential friction capped by the Coulomb cone (gives true
    stiction instead of viscous creep)."""

    k_normal: float = 2.5e4
    c_normal: float = 5.0e2
    k_tangent: float = 1.0e4
    c_tangent: float = 1.5e2
    mu: float = 0.8
    enabled: bool = True


@dataclass
class KinematicModel:
    """Preprocessed tree model ready for batched simulation.

    Bodies are the moving links only; the floating base is handled
    separately. `levels` groups body indices by tree depth so both legs are
    stepped through the recursions together.
    """

    parent: np.ndarray          # (nb,) int, -1 means the base
    axis: np.ndarray            # (nb, 3) unit joint axes in the link frame
    offset: np.ndarray          # (nb, 3) joint origin in the parent frame
    mass: np.ndarray            # (nb,)
    com: np.ndarray             # (nb, 3) in the link frame
    inertia: np.ndarray         # (nb, 3, 3) about the com
    q_default: np.ndarray       # (nb,)
    q_lower: np.ndarray
    q_upper: np.ndarray
    tau_limit: np.ndarray
    base_mass: float
    base_com: np.ndarray
    base_inertia: np.ndarray
    head_offset: np.ndarray
    gains: PDGains
    contact: ContactParams
    gravity: float = 9.81
    base_fixed: bool = False
    foot_bodies: np.ndarray | None = None   # (2,) [left, right] link indices
    foot_corners: np.ndarray | None = None  # (4, 3) in the foot frame
    joint_limit_slack: float = 0.05
    params: dict = field(default_factory=dict, repr=False)

    # filled by __post_init__
    nb: int = field(init=False)
    levels: list = field(init=False, repr=False)
    level_axis: list = field(init=False, repr=False)
    level_offset: list = field(init=False, repr=False)
    level_offset_skew: list = field(init=False, repr=False)
    level_parent: list = field(init=False, repr=False)
    spatial_inertia: np.ndarray = field(init=False, repr=False)
    base_spatial_inertia: np.ndarray = field(init=False, repr=False)
    limit_k: np.ndarray = field(init=False, repr=False)
    limit_c: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.nb = len(self.parent)
        for name in ("axis", "offset", "mass", "com", "inertia", "q_default",
                     "q_lower", "q_upper", "tau_limit", "base_com",
                     "base_inertia", "head_offset"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.foot_bodies is not None:
            self.foot_bodies = np.asarray(self.foot_bodies, dtype=np.int64)
            self.foot_corners = np.asarray(self.foot_corners, dtype=np.float64)
        self._validate()
        self.levels = self._build_levels()
        self.level_axis = [np.ascontiguousarray(self.axis[lvl]) for lvl in self.levels]
        self.level_offset = [np.ascontiguousarray(self.offset[lvl]) for lvl in self.levels]
        self.level_offset_skew = [skew(off) for off in self.level_offset]
        self.level_parent = [self.parent[lvl] for lvl in self.levels]
        self.spatial_inertia = np.stack(
            [_spatial_inertia(self.mass[i], self.com[i], self.inertia[i]) for i in range(self.nb)]
        )
        self.base_spatial_inertia = _spatial_inertia(self.base_mass, self.base_com, self.base_inertia)
        # stiff restoring springs past the joint range; sized so a torque-limit
        # level fight overshoots well under the documented slack
        self.limit_k = self.tau_limit / (0.4 * self.joint_limit_slack)
        self.limit_c = 0.05 * self.limit_k

    def _validate(self) -> None:
        if self.nb == 0:
            raise ValueError("model needs at least one moving link")
        if np.any(self.mass <= 0) or self.base_mass <= 0:
            raise ValueError("all masses must be positive")
        for i in range(self.nb):
            eig = np.linalg.eigvalsh(self.inertia[i])
            if np.any(eig <= 0) or not np.allclose(self.inertia[i], self.inertia[i].T):
                raise ValueError(f"link {i} inertia must be symmetric positive definite")
        if np.any(self.q_default < self.q_lower) or np.any(self.q_default > self.q_upper):
            raise ValueError("q_default must lie within the joint limits")
        norms = np.linalg.norm(self.axis, axis=-1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("joint axes must be unit vectors")
        counts = np.bincount(self.parent[self.parent >= 0], minlength=self.nb)
        if np.any(counts > 1):
            raise ValueError("only serial chains hanging off the base are supported")
        for i, p in enumerate(self.parent):
            if p >= i:
                raise ValueError("bodies must be topologically ordered")

    def _build_levels(self) -> list:
        depth = np.empty(self.nb, dtype=np.int64)
        for i, p in enumerate(self.parent):
            depth[i] = 0 if p < 0 else depth[p] + 1
        return [np.flatnonzero(depth == d) for d in range(depth.max() + 1)]

    @property
    def total_mass(self) -> float:
        return float(self.base_mass + self.mass.sum())

    def standing_base_height(self) -> float:
        """Base height that puts the lowest foot corner on the ground at q_default."""
        if self.foot_bodies is None:
            raise ValueError("model has no feet")
        rot, pos = chain_fk(self, self.q_default[None, :])
        corners = pos[0, self.foot_bodies][:, None, :] + np.einsum(
            "fij,cj->fci", rot[0, self.foot_bodies], self.foot_corners
        )
        return float(-corners[..., 2].min())

    @classmethod
    def from_params(cls, params: dict) -> "KinematicModel":
        schema = params.get("schema", MODEL_SCHEMA_ID)
        if schema != MODEL_SCHEMA_ID:
            raise ValueError(f"unsupported model schema {schema!r}, expected {MODEL_SCHEMA_ID!r}")
        return build_biped(params)


def _spatial_inertia(mass: float, com: np.ndarray, inertia_com: np.ndarray) -> np.ndarray:
    """6x6 spatial inertia about the link origin, angular block first."""
    c = skew(com)
    out = np.zeros((6, 6))
    out[:3, :3] = inertia_com - mass * (c @ c)
    out[:3, 3:] = mass * c
    out[3:, :3] = -mass * c
    out[3:, 3:] = mass * np.eye(3)
    return out


def chain_fk(model: KinematicModel, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Link poses relative to the base frame at joint angles q (batched)."""
    n = q.shape[0]
    rot = np.empty((n, model.nb, 3, 3))
    pos = np.empty((n, model.nb, 3))
    joint_rot = axis_angle_matrix(model.axis, q)
    for lvl in model.levels:
        p = model.parent[lvl]
        if p[0] < 0:
            pr = np.broadcast_to(np.eye(3), (n, len(lvl), 3, 3))
            pp = np.zeros((n, len(lvl), 3))
        else:
            pr = rot[:, p]
            pp = pos[:, p]
        rot[:, lvl] = pr @ joint_rot[:, lvl]
        pos[:, lvl] = pp + np.einsum("nlij,lj->nli", pr, model.offset[lvl])
    return rot, pos


def default_biped_params() -> dict:
    """Documented default parameters: ~80 kg, standing base height ~0.8 m."""
    thigh_len = 0.38
    shank_len = 0.38
    return {
        "schema": MODEL_SCHEMA_ID,
        "base": {
            "mass": 54.0,
            "com": [0.0, 0.0, 0.20],
            "inertia": [2.6, 2.4, 1.0],
            "head_offset": [0.0, 0.0, 0.62],
        },
        "leg": {
            "hip_offset_y": 0.08,
            "thigh_length": thigh_len,
            "shank_length": shank_len,
            "ankle_height": 0.07,
            "link_mass": {
                "hip_yaw": 0.8, "hip_roll": 0.8, "hip_pitch": 6.0,
                "knee_pitch": 4.0, "ankle_pitch": 0.5, "ankle_roll": 1.3,
            },
            "link_com": {
                "hip_yaw": [0.0, 0.0, 0.0],
                "hip_roll": [0.0, 0.0, 0.0],
                "hip_pitch": [0.0, 0.0, -0.19],
                "knee_pitch": [0.0, 0.0, -0.19],
                "ankle_pitch": [0.0, 0.0, 0.0],
                "ankle_roll": [0.04, 0.0, -0.05],
            },
            "link_inertia": {
                "hip_yaw": [0.004, 0.004, 0.004],
                "hip_roll": [0.004, 0.004, 0.004],
                "hip_pitch": [0.075, 0.075, 0.012],
                "knee_pitch": [0.050, 0.050, 0.008],
                "ankle_pitch": [0.003, 0.003, 0.003],
                "ankle_roll": [0.004, 0.008, 0.009],
            },
            "q_default": [0.0, 0.0, -0.3, 0.6, -0.3, 0.0],
            "q_lower": [-0.6, -0.45, -1.6, -0.05, -1.3, -0.45],
            "q_upper": [0.6, 0.45, 0.9, 2.3, 0.9, 0.45],
            "tau_limit": [80.0, 120.0, 160.0, 200.0, 120.0, 60.0],
        },
        "foot": {
            # support polygon roughly centered under the standing COM;
            # sole 0.07 m below the ankle
            "corners_x": [-0.09, 0.11],
            "corners_y": [-0.05, 0.05],
            "sole_z": -0.07,
        },
        "contact": {
            "k_normal": 2.5e4,
            "c_normal": 8.0e2,
            "k_tangent": 1.0e4,
            "c_tangent": 1.5e2,
            "mu": 0.8,
            "enabled": True,
        },
        "control": {
            # natural frequency of the tuning rule: a 0.1 rad knee step
            # settles in well under 0.3 s
            "omega_n": 25.0,
            # stiffness floor relative to the gravitational destabilization
            # of the supported mass; soft gains here cannot stand
            "gravity_margin": 10.0,
            # extra damping proportional to kp, for the planted modes
            "kd_floor_tau": 0.04,
        },
        "gravity": 9.81,
    }


def build_biped(params: dict | None = None) -> KinematicModel:
    p = copy.deepcopy(default_biped_params())
    if params:
        _deep_update(p, params)
    leg = p["leg"]
    foot = p["foot"]

    axes, offsets, masses, coms, inertias = [], [], [], [], []
    parents = []
    for side, sign in (("left", 1.0), ("right", -1.0)):
        base_idx = len(parents)
        for k, name in enumerate(LEG_JOINT_NAMES):
            parents.append(-1 if k == 0 else base_idx + k - 1)
            axes.append(LEG_AXES[name])
            if k == 0:
                offsets.append([0.0, sign * leg["hip_offset_y"], 0.0])
            elif name == "knee_pitch":
                offsets.append([0.0, 0.0, -leg["thigh_length"]])
            elif name == "ankle_pitch":
                offsets.append([0.0, 0.0, -leg["shank_length"]])
            else:
                offsets.append([0.0, 0.0, 0.0])
            masses.append(leg["link_mass"][name])
            com = list(leg["link_com"][name])
            com[1] *= sign
            coms.append(com)
            inertias.append(np.diag(leg["link_inertia"][name]))

    corners = np.array(
        [[x, y, foot["sole_z"]] for x in foot["corners_x"] for y in foot["corners_y"]]
    )
    model = KinematicModel(
        parent=np.array(parents),
        axis=np.array(axes),
        offset=np.array(offsets),
        mass=np.array(masses),
        com=np.array(coms),
        inertia=np.stack(inertias),
        q_default=np.tile(leg["q_default"], 2),
        q_lower=np.tile(leg["q_lower"], 2),
        q_upper=np.tile(leg["q_upper"], 2),
        tau_limit=np.tile(leg["tau_limit"], 2),
        base_mass=p["base"]["mass"],
        base_com=p["base"]["com"],
        base_inertia=np.diag(p["base"]["inertia"]),
        head_offset=p["base"]["head_offset"],
        gains=PDGains(kp=np.zeros(12), kd=np.zeros(12)),
        contact=ContactParams(**p["contact"]),
        gravity=p["gravity"],
        foot_bodies=np.array([5, 11]),
        foot_corners=corners,
        params=p,
    )
    model.gains = derive_pd_gains(
        model,
        omega_n=p["control"]["omega_n"],
        gravity_margin=p["control"]["gravity_margin"],
        kd_floor_tau=p["control"]["kd_floor_tau"],
    )
    return model


def default_biped() -> KinematicModel:
    return build_biped()


def make_pendulum(
    mass: float = 1.0,
    length: float = 1.0,
    gravity: float = 9.81,
    kp: float = 0.0,
    kd: float = 0.0,
    q_default: float = 0.0,
    tau_limit: float = 60.0,
) -> KinematicModel:
    """Single revolute link swinging about the y axis from a welded base.

    The passive case (kp = kd = 0) is the energy-conservation oracle for the
    integrator; with gains it is the plant for the toy balance task.
    """
    rod_i = mass * length * length / 12.0
    return KinematicModel(
        parent=np.array([-1]),
        axis=np.array([[0.0, 1.0, 0.0]]),
        offset=np.array([[0.0, 0.0, 0.0]]),
        mass=np.array([mass]),
        com=np.array([[0.0, 0.0, -length / 2.0]]),
        inertia=np.array([np.diag([rod_i, rod_i, 1e-4 * mass * length * length])]),
        q_default=np.array([q_default]),
        q_lower=np.array([-4.0 * np.pi]),
        q_upper=np.array([4.0 * np.pi]),
        tau_limit=np.array([tau_limit]),
        base_mass=1.0,
        base_com=np.zeros(3),
        base_inertia=np.eye(3),
        head_offset=np.zeros(3),
        gains=PDGains(kp=np.array([kp]), kd=np.array([kd])),
        contact=ContactParams(enabled=False),
        gravity=gravity,
        base_fixed=True,
    )


def derive_pd_gains(
    model: KinematicModel,
    omega_n: float = 25.0,
    gravity_margin: float = 2.5,
    kd_floor_tau: float = 0.03,
) -> PDGains:
    """Reproducible gain sizing instead of hand-tuned per-joint numbers.

    Two requirements set the stiffness: tracking the distal subtree at
    natural frequency omega_n (a 0.1 rad knee step settles well inside
    0.3 s at critical damping), and holding up the rest of the robot when
    the subtree is planted — the gravitational stiffness of the supported
    mass about the joint axis, covered with a safety margin. Without the
    second term the ankles come out orders of magnitude too soft to stand.

    kd is critical for the swing inertia plus a floor proportional to kp
    that damps the planted (inverted-pendulum) modes.
    """
    rot, pos = chain_fk(model, model.q_default[None, :])
    rot, pos = rot[0], pos[0]
    zhat = np.array([0.0, 0.0, 1.0])
    kp = np.empty(model.nb)
    i_swing = np.empty(model.nb)
    for j in range(model.nb):
        subtree = [j]
        for b in range(j + 1, model.nb):
            if model.parent[b] in subtree:
                subtree.append(b)
        axis_w = rot[j] @ model.axis[j]
        origin = pos[j]
        i_sub = 0.0
        for b in subtree:
            com_w = pos[b] + rot[b] @ model.com[b]
            i_w = rot[b] @ model.inertia[b] @ rot[b].T
            d = com_w - origin
            i_about = i_w + model.mass[b] * (np.dot(d, d) * np.eye(3) - np.outer(d, d))
            i_sub += axis_w @ i_about @ axis_w
        m_rest = model.base_mass
        moment = model.base_mass * model.base_com
        for b in range(model.nb):
            if b in subtree:
                continue
            com_w = pos[b] + rot[b] @ model.com[b]
            m_rest += model.mass[b]
            moment = moment + model.mass[b] * com_w
        lever = moment / m_rest - origin
        grav_stiffness = abs(
            m_rest * model.gravity * (axis_w @ np.cross(np.cross(axis_w, lever), zhat))
        )
        kp[j] = max(omega_n * omega_n * i_sub, gravity_margin * grav_stiffness)
        i_swing[j] = i_sub
    kd = 2.0 * np.sqrt(kp * i_swing) + kd_floor_tau * kp
    return PDGains(kp=kp, kd=kd)


def _deep_update(dst: dict, src: dict) -> None:
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _deep_update(dst[k], v)
        else:
            dst[k] = v
