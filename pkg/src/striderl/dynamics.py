"""Batched floating-base rigid-body simulation.

Forward dynamics uses the articulated-body algorithm over the base + chain
tree, with spatial vectors in body coordinates (angular part first). Ground
contact is a penalty model on the foot corner points: spring-damper normal
force plus Coulomb-capped viscous tangential friction. Integration is
semi-implicit Euler with quaternion renormalization.

All state arrays carry a leading batch axis, so N environments step in one
call; N = 1 is the degenerate case. Identical inputs produce bit-identical
outputs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .model import KinematicModel
from .spatial import axis_angle_matrix, projected_gravity, quat_integrate, quat_to_matrix

# the compiled kernel is the default backend; STRIDERL_PURE_NUMPY=1 forces
# the reference implementation (the oracle the kernel is tested against)
_fastdyn = None
if not os.environ.get("STRIDERL_PURE_NUMPY"):
    try:
        from . import _fastdyn  # type: ignore[no-redef]
    except ImportError:  # pragma: no cover - numba genuinely missing
        _fastdyn = None

__all__ = [
    "BipedState",
    "ContactReport",
    "default_state",
    "forward_kinematics",
    "step_dynamics",
    "contact_forces",
    "projected_gravity",
]


@dataclass
class BipedState:
    """Floating-base pose/velocity plus joint state, batched over envs.

    Linear velocity is world-frame; angular velocity is body-frame. The
    friction anchors are internal contact memory (world xy each foot corner
    sticks to); they ride along so stepping stays a pure function of state.
    """

    base_pos: np.ndarray     # (n, 3)
    base_quat: np.ndarray    # (n, 4) wxyz, unit norm
    base_linvel: np.ndarray  # (n, 3)
    base_angvel: np.ndarray  # (n, 3)
    q: np.ndarray            # (n, nb)
    qd: np.ndarray           # (n, nb)
    time: np.ndarray         # (n,)
    contact_anchor: np.ndarray | None = None   # (n, 2, 4, 2) world xy
    contact_active: np.ndarray | None = None   # (n, 2, 4) bool

    @property
    def num_envs(self) -> int:
        return self.base_pos.shape[0]

    def copy(self) -> "BipedState":
        return BipedState(*(
            None if getattr(self, f) is None else getattr(self, f).copy()
            for f in _STATE_FIELDS
        ))

    def assign(self, mask: np.ndarray, other: "BipedState") -> None:
        """Overwrite the masked envs with the corresponding rows of `other`."""
        for f in _STATE_FIELDS:
            mine, theirs = getattr(self, f), getattr(other, f)
            if mine is not None and theirs is not None:
                mine[mask] = theirs[mask]

    def is_finite(self) -> np.ndarray:
        ok = np.ones(self.num_envs, dtype=bool)
        for f in ("base_pos", "base_quat", "base_linvel", "base_angvel", "q", "qd", "time"):
            arr = getattr(self, f)
            ok &= np.isfinite(arr).reshape(self.num_envs, -1).all(axis=1)
        return ok


_STATE_FIELDS = (
    "base_pos", "base_quat", "base_linvel", "base_angvel", "q", "qd", "time",
    "contact_anchor", "contact_active",
)


@dataclass
class ContactReport:
    """Per-foot contact quantities from the most recent substep."""

    fz: np.ndarray             # (n, n_feet) total normal force, >= 0
    tangential: np.ndarray     # (n, n_feet) tangential force magnitude
    foot_speed_sq: np.ndarray  # (n, n_feet) squared world speed of the foot frame
    in_contact: np.ndarray     # (n, n_feet) bool
    diverged: np.ndarray       # (n,) bool, state went non-finite and was rolled back


def default_state(model: KinematicModel, num_envs: int = 1, base_height: float | None = None) -> BipedState:
    """Standing state at the default pose with zero velocities."""
    if base_height is None:
        base_height = model.standing_base_height() if model.foot_bodies is not None else 0.0
    quat = np.zeros((num_envs, 4))
    quat[:, 0] = 1.0
    pos = np.zeros((num_envs, 3))
    pos[:, 2] = base_height
    return BipedState(
        base_pos=pos,
        base_quat=quat,
        base_linvel=np.zeros((num_envs, 3)),
        base_angvel=np.zeros((num_envs, 3)),
        q=np.tile(model.q_default, (num_envs, 1)),
        qd=np.zeros((num_envs, model.nb)),
        time=np.zeros(num_envs),
    )


def forward_kinematics(model: KinematicModel, state: BipedState) -> dict:
    """World poses of the frames the rewards need: base, head, both feet."""
    n = state.num_envs
    r_base = quat_to_matrix(state.base_quat)
    rot = np.empty((n, model.nb, 3, 3))
    pos = np.empty((n, model.nb, 3))
    joint_rot = axis_angle_matrix(model.axis, state.q)
    for li, lvl in enumerate(model.levels):
        p = model.level_parent[li]
        if p[0] < 0:
            pr = r_base[:, None]
            pp = state.base_pos[:, None]
        else:
            pr = rot[:, p]
            pp = pos[:, p]
        rot[:, lvl] = pr @ joint_rot[:, lvl]
        pos[:, lvl] = pp + np.einsum("nlij,lj->nli", pr, model.level_offset[li])
    frames = {
        "base": (r_base, state.base_pos.copy()),
        "head": (r_base, state.base_pos + np.einsum("nij,j->ni", r_base, model.head_offset)),
    }
    if model.foot_bodies is not None:
        for name, b in zip(("left_foot", "right_foot"), model.foot_bodies):
            frames[name] = (rot[:, b], pos[:, b])
    return frames


def contact_forces(report: ContactReport) -> tuple[np.ndarray, np.ndarray]:
    """Exactly the quantities the gait rewards consume: (F_z, foot speed^2)."""
    return report.fz, report.foot_speed_sq


def step_dynamics(
    model: KinematicModel,
    state: BipedState,
    joint_targets: np.ndarray,
    dt: float,
    n_substeps: int = 1,
    tau_ext: np.ndarray | None = None,
    backend: str | None = None,
) -> tuple[BipedState, ContactReport, np.ndarray]:
    """Advance the simulation by n_substeps of length dt under PD control.

    Targets are clamped to the joint range and held for all substeps; an
    optional external joint torque is added on top (test harnesses, pushes).
    The returned torques and contact report are from the last substep. Envs
    whose state goes non-finite are rolled back to their pre-call state and
    flagged in `report.diverged` — callers treat that as a termination.

    `backend` picks "compiled" or "reference" explicitly; by default the
    compiled kernel is used when available.
    """
    if not (0.0 < dt <= 0.01):
        raise ValueError(f"dt must be in (0, 0.01], got {dt}")
    if n_substeps < 1:
        raise ValueError("n_substeps must be >= 1")
    if backend is None:
        backend = "compiled" if _fastdyn is not None else "reference"
    elif backend == "compiled" and _fastdyn is None:
        raise RuntimeError("compiled backend requested but numba is unavailable")
    joint_targets = np.asarray(joint_targets, dtype=np.float64)
    if joint_targets.ndim == 1:
        joint_targets = joint_targets[None, :]
    targets = np.clip(joint_targets, model.q_lower, model.q_upper)

    before = state.copy()
    s = state.copy()
    # divergence shows up as overflow/nan and is rolled back below; the
    # warnings would only spam stderr during normal RL exploration
    with np.errstate(over="ignore", invalid="ignore"):
        if backend == "compiled":
            tau, fz, tang, speed_sq, in_contact = _step_compiled(
                model, s, targets, dt, n_substeps, tau_ext
            )
        else:
            for _ in range(n_substeps):
                tau, fz, tang, speed_sq, in_contact = _substep(model, s, targets, dt, tau_ext)

    diverged = ~s.is_finite()
    if diverged.any():
        s.assign(diverged, before)
        for arr in (tau, fz, tang, speed_sq):
            arr[diverged] = 0.0
        in_contact[diverged] = False
    report = ContactReport(fz=fz, tangential=tang, foot_speed_sq=speed_sq,
                           in_contact=in_contact, diverged=diverged)
    return s, report, tau


def _step_compiled(model: KinematicModel, s: BipedState, targets: np.ndarray,
                   dt: float, n_substeps: int, tau_ext: np.ndarray | None):
    n = s.num_envs
    nb = model.nb
    has_feet = model.foot_bodies is not None
    contact_on = bool(has_feet and model.contact.enabled)
    if contact_on and s.contact_anchor is None:
        s.contact_anchor = np.zeros((n, 2, 4, 2))
        s.contact_active = np.zeros((n, 2, 4), dtype=bool)
    anchor = s.contact_anchor if s.contact_anchor is not None else np.zeros((1, 2, 4, 2))
    active = s.contact_active if s.contact_active is not None else np.zeros((1, 2, 4), dtype=bool)
    if tau_ext is None:
        te = np.zeros((n, nb))
    else:
        te = np.ascontiguousarray(np.broadcast_to(np.asarray(tau_ext, dtype=np.float64), (n, nb)))
    targets_c = np.ascontiguousarray(np.broadcast_to(targets, (n, nb)))
    fb = model.foot_bodies if has_feet else np.array([-1, -1], dtype=np.int64)
    corners = model.foot_corners if has_feet else np.zeros((4, 3))
    tau_out = np.zeros((n, nb))
    fz = np.zeros((n, 2))
    tang = np.zeros((n, 2))
    speed_sq = np.zeros((n, 2))
    in_contact = np.zeros((n, 2), dtype=bool)
    _fastdyn.step_batch(
        s.base_pos, s.base_quat, s.base_linvel, s.base_angvel, s.q, s.qd, s.time,
        anchor, active, targets_c, te,
        tau_out, fz, tang, speed_sq, in_contact,
        model.parent, model.axis, model.offset, model.spatial_inertia,
        model.mass, model.com,
        model.base_spatial_inertia, float(model.base_mass), model.base_com,
        model.gains.kp, model.gains.kd, model.tau_limit,
        model.limit_k, model.limit_c, model.q_lower, model.q_upper,
        fb, corners,
        float(model.contact.k_normal), float(model.contact.c_normal),
        float(model.contact.k_tangent), float(model.contact.c_tangent),
        float(model.contact.mu),
        float(model.gravity), float(dt), int(n_substeps),
        bool(model.base_fixed), contact_on,
    )
    return tau_out, fz, tang, speed_sq, in_contact


def _substep(model: KinematicModel, s: BipedState, targets: np.ndarray, dt: float,
             tau_ext: np.ndarray | None = None):
    n = s.num_envs
    nb = model.nb
    nlvl = len(model.levels)

    # PD torques with actuator limits; stiff springs guard the joint range
    tau_act = np.clip(
        model.gains.kp * (targets - s.q) - model.gains.kd * s.qd,
        -model.tau_limit, model.tau_limit,
    )
    over = np.maximum(s.q - model.q_upper, 0.0)
    under = np.maximum(model.q_lower - s.q, 0.0)
    at_limit = (over > 0.0) | (under > 0.0)
    tau = tau_act + model.limit_k * (under - over) - model.limit_c * s.qd * at_limit
    if tau_ext is not None:
        tau = tau + tau_ext
    # stiff spring-dampers are integrated implicitly to first order: their
    # velocity/position Jacobians augment the joint-space inertia D below,
    # which keeps arbitrarily stiff gains stable at the 1 ms substep
    d_aug = dt * (model.gains.kd + model.limit_c * at_limit
                  + dt * (model.gains.kp + model.limit_k * at_limit))

    r_base = quat_to_matrix(s.base_quat)
    v_base = np.concatenate(
        [s.base_angvel, np.einsum("nji,nj->ni", r_base, s.base_linvel)], axis=-1
    )

    # one outward sweep: world poses, body-frame velocities, joint transforms
    rot = np.empty((n, nb, 3, 3))
    pos = np.empty((n, nb, 3))
    v = np.empty((n, nb, 6))
    cbias = np.empty((n, nb, 6))
    xmats = []
    joint_rot = axis_angle_matrix(model.axis, s.q)
    for li in range(nlvl):
        lvl = model.levels[li]
        p = model.level_parent[li]
        ax = model.level_axis[li]
        if p[0] < 0:
            pr = r_base[:, None]
            pp = s.base_pos[:, None]
            vp = v_base[:, None]
        else:
            pr = rot[:, p]
            pp = pos[:, p]
            vp = v[:, p]
        jr = joint_rot[:, lvl]
        rot[:, lvl] = pr @ jr
        pos[:, lvl] = pp + np.einsum("nlij,lj->nli", pr, model.level_offset[li])
        e = np.swapaxes(jr, -1, -2)
        x = np.zeros((n, len(lvl), 6, 6))
        x[..., :3, :3] = e
        x[..., 3:, 3:] = e
        x[..., 3:, :3] = -(e @ model.level_offset_skew[li])
        xmats.append(x)
        vi = np.einsum("nlij,nlj->nli", x, vp)
        sqd = ax * s.qd[:, lvl, None]
        vi[..., :3] += sqd
        v[:, lvl] = vi
        cbias[:, lvl, :3] = np.cross(vi[..., :3], sqd)
        cbias[:, lvl, 3:] = np.cross(vi[..., 3:], sqd)

    # external wrenches in link coordinates: gravity, then foot contacts
    g_world = np.array([0.0, 0.0, -model.gravity])
    f_ext = np.empty((n, nb, 6))
    fg = np.einsum("nbji,j->nbi", rot, g_world) * model.mass[:, None]
    f_ext[..., 3:] = fg
    f_ext[..., :3] = np.cross(model.com, fg)

    fz = np.zeros((n, 2))
    tang = np.zeros((n, 2))
    speed_sq = np.zeros((n, 2))
    in_contact = np.zeros((n, 2), dtype=bool)
    if model.foot_bodies is not None:
        fb = model.foot_bodies
        rot_f = rot[:, fb]                      # (n, 2, 3, 3)
        pos_f = pos[:, fb]
        omega_w = np.einsum("nfij,nfj->nfi", rot_f, v[:, fb, :3])
        vel_w = np.einsum("nfij,nfj->nfi", rot_f, v[:, fb, 3:])
        speed_sq[:] = np.sum(vel_w * vel_w, axis=-1)
        if model.contact.enabled:
            if s.contact_anchor is None:
                s.contact_anchor = np.zeros((n, 2, 4, 2))
                s.contact_active = np.zeros((n, 2, 4), dtype=bool)
            corners_w = np.einsum("nfij,cj->nfci", rot_f, model.foot_corners)
            p_c = pos_f[:, :, None, :] + corners_w
            v_c = vel_w[:, :, None, :] + np.cross(omega_w[:, :, None, :], corners_w)
            depth = -p_c[..., 2]
            pen = depth > 0.0
            f_n = np.where(
                pen,
                np.maximum(0.0, model.contact.k_normal * depth - model.contact.c_normal * v_c[..., 2]),
                0.0,
            )
            # friction: a spring to the world point the corner first touched,
            # capped by the cone; the anchor slides when the cap is hit
            fresh = pen & ~s.contact_active
            s.contact_anchor[fresh] = p_c[..., :2][fresh]
            f_t = np.where(
                pen[..., None],
                -model.contact.k_tangent * (p_c[..., :2] - s.contact_anchor)
                - model.contact.c_tangent * v_c[..., :2],
                0.0,
            )
            ft_norm = np.linalg.norm(f_t, axis=-1)
            cap = model.contact.mu * f_n
            slip = ft_norm > cap
            scale = np.where(slip, cap / np.maximum(ft_norm, 1e-30), 1.0)
            f_t = f_t * scale[..., None]
            slid = p_c[..., :2] + (f_t + model.contact.c_tangent * v_c[..., :2]) / model.contact.k_tangent
            s.contact_anchor = np.where((slip & pen)[..., None], slid, s.contact_anchor)
            s.contact_active = pen
            f_w = np.concatenate([f_t, f_n[..., None]], axis=-1)   # (n, 2, 4, 3)
            f_foot = np.einsum("nfji,nfcj->nfci", rot_f, f_w)       # to foot coords
            n_foot = np.cross(model.foot_corners, f_foot)
            f_ext[:, fb, 3:] += f_foot.sum(axis=2)
            f_ext[:, fb, :3] += n_foot.sum(axis=2)
            fz[:] = f_n.sum(axis=-1)
            tang[:] = np.linalg.norm(f_t.sum(axis=2), axis=-1)
            in_contact[:] = pen.any(axis=-1)

    fg_base = (r_base.transpose(0, 2, 1) @ g_world) * model.base_mass
    f_ext_base = np.concatenate([np.cross(model.base_com, fg_base), fg_base], axis=-1)

    # articulated-body algorithm: bias forces, then inward/outward sweeps
    ia = np.broadcast_to(model.spatial_inertia, (n, nb, 6, 6)).copy()
    h = np.einsum("bij,nbj->nbi", model.spatial_inertia, v)
    pa = np.empty((n, nb, 6))
    pa[..., :3] = np.cross(v[..., :3], h[..., :3]) + np.cross(v[..., 3:], h[..., 3:])
    pa[..., 3:] = np.cross(v[..., :3], h[..., 3:])
    pa -= f_ext

    ia_base = np.broadcast_to(model.base_spatial_inertia, (n, 6, 6)).copy()
    hb = v_base @ model.base_spatial_inertia.T
    pa_base = np.empty((n, 6))
    pa_base[:, :3] = np.cross(v_base[:, :3], hb[:, :3]) + np.cross(v_base[:, 3:], hb[:, 3:])
    pa_base[:, 3:] = np.cross(v_base[:, :3], hb[:, 3:])
    pa_base -= f_ext_base

    u_arr = np.empty((n, nb, 6))
    d_arr = np.empty((n, nb))
    u_small = np.empty((n, nb))
    for li in range(nlvl - 1, -1, -1):
        lvl = model.levels[li]
        p = model.level_parent[li]
        ax = model.level_axis[li]
        u = np.einsum("nlij,lj->nli", ia[:, lvl, :, :3], ax)
        d = np.einsum("nli,li->nl", u[..., :3], ax) + d_aug[:, lvl]
        us = tau[:, lvl] - np.einsum("nli,li->nl", pa[:, lvl, :3], ax)
        u_arr[:, lvl] = u
        d_arr[:, lvl] = d
        u_small[:, lvl] = us
        ia_i = ia[:, lvl] - u[..., :, None] * (u / d[..., None])[..., None, :]
        pa_i = (
            pa[:, lvl]
            + np.einsum("nlij,nlj->nli", ia_i, cbias[:, lvl])
            + u * (us / d)[..., None]
        )
        x = xmats[li]
        xt = np.swapaxes(x, -1, -2)
        ia_contrib = xt @ ia_i @ x
        pa_contrib = np.einsum("nlij,nlj->nli", xt, pa_i)
        if p[0] < 0:
            ia_base += ia_contrib.sum(axis=1)
            pa_base += pa_contrib.sum(axis=1)
        else:
            ia[:, p] += ia_contrib
            pa[:, p] += pa_contrib

    if model.base_fixed:
        a_base = np.zeros((n, 6))
    else:
        a_base = np.linalg.solve(ia_base, -pa_base[..., None])[..., 0]

    qdd = np.empty((n, nb))
    a = np.empty((n, nb, 6))
    for li in range(nlvl):
        lvl = model.levels[li]
        p = model.level_parent[li]
        ap = a_base[:, None] if p[0] < 0 else a[:, p]
        a_prime = np.einsum("nlij,nlj->nli", xmats[li], ap) + cbias[:, lvl]
        qdd_l = (
            u_small[:, lvl] - np.einsum("nli,nli->nl", u_arr[:, lvl], a_prime)
        ) / d_arr[:, lvl]
        qdd[:, lvl] = qdd_l
        a_prime[..., :3] += model.level_axis[li] * qdd_l[..., None]
        a[:, lvl] = a_prime

    # semi-implicit Euler: velocities first, then positions from new velocities
    s.qd += dt * qdd
    s.q += dt * s.qd
    if not model.base_fixed:
        v_base_new = v_base + dt * a_base
        s.base_angvel = v_base_new[:, :3]
        s.base_linvel = np.einsum("nij,nj->ni", r_base, v_base_new[:, 3:])
        s.base_pos = s.base_pos + dt * s.base_linvel
        s.base_quat = quat_integrate(s.base_quat, s.base_angvel, dt)
    s.time = s.time + dt
    return tau_act, fz, tang, speed_sq, in_contact
