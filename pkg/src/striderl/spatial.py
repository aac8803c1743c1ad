"""Rotation and spatial-vector helpers shared by the simulator and env.

Quaternions are (w, x, y, z). Spatial vectors are 6-vectors with the angular
part first, expressed in the frame of the body they belong to, taken at the
body frame origin. Everything is batched: leading axes broadcast.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "quat_normalize",
    "quat_multiply",
    "quat_to_matrix",
    "quat_from_axis_angle",
    "quat_integrate",
    "euler_zyx_from_quat",
    "axis_angle_matrix",
    "skew",
    "projected_gravity",
]


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix mapping body coordinates to world coordinates."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3), dtype=q.dtype)
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def quat_from_axis_angle(axis: np.ndarray, angle) -> np.ndarray:
    angle = np.asarray(angle)
    half = 0.5 * angle
    xyz = axis * np.sin(half)[..., None]
    return np.concatenate([np.cos(half)[..., None], xyz], axis=-1)


def quat_integrate(q: np.ndarray, omega_body: np.ndarray, dt: float) -> np.ndarray:
    """Advance orientation by body-frame angular velocity over dt, renormalized."""
    angle = np.linalg.norm(omega_body, axis=-1)
    # guard the zero-rotation direction; sin(0)*0/eps == 0 keeps it exact
    axis = omega_body / np.maximum(angle, 1e-30)[..., None]
    dq = quat_from_axis_angle(axis, angle * dt)
    return quat_normalize(quat_multiply(q, dq))


def euler_zyx_from_quat(q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(roll, pitch, yaw) with the Z-Y-X convention."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2.0 * (w * y - z * x), -1.0, 1.0))
    yaw = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return roll, pitch, yaw


def axis_angle_matrix(axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Rodrigues rotation about unit axes; broadcasts over leading dims."""
    c = np.cos(angle)[..., None, None]
    s = np.sin(angle)[..., None, None]
    k = skew(axis)
    eye = np.eye(3, dtype=np.result_type(axis, angle))
    return eye * c + s * k + (1.0 - c) * (axis[..., :, None] * axis[..., None, :])


def skew(v: np.ndarray) -> np.ndarray:
    m = np.zeros(v.shape[:-1] + (3, 3), dtype=v.dtype)
    m[..., 0, 1] = -v[..., 2]
    m[..., 0, 2] = v[..., 1]
    m[..., 1, 0] = v[..., 2]
    m[..., 1, 2] = -v[..., 0]
    m[..., 2, 0] = -v[..., 1]
    m[..., 2, 1] = v[..., 0]
    return m


def projected_gravity(base_quat: np.ndarray) -> np.ndarray:
    """World down direction (0, 0, -1) expressed in the base frame.

    Encodes base tilt without yaw; unit norm for any unit quaternion.
    """
    r = quat_to_matrix(base_quat)
    # R^T @ (0,0,-1) is just the negated last row of R
    return -r[..., 2, :]
