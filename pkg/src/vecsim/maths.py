"""Spatial math: quaternions, rigid transforms, and small helpers.

Conventions used across the package:

* quaternions are ``(w, x, y, z)`` arrays with unit norm,
* lengths are meters, angles radians, the world frame is Z-up,
* all functions broadcast over leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Scale quaternions to unit norm."""
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product ``a * b``."""
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors ``v`` by quaternions ``q``."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., :1]
    xyz = q[..., 1:]
    t = 2.0 * np.cross(xyz, v)
    return v + w * t + np.cross(xyz, t)


def quat_rotate_inverse(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_rotate(quat_conjugate(q), v)


def quat_from_axis_angle(axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Quaternion for a rotation of ``angle`` about unit ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    half = 0.5 * angle
    return np.concatenate(
        [np.cos(half)[..., None], axis * np.sin(half)[..., None]], axis=-1
    )


def quat_from_rotvec(v: np.ndarray) -> np.ndarray:
    """Exponential map: rotation-vector (axis * angle) to quaternion."""
    v = np.asarray(v, dtype=np.float64)
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    half = 0.5 * angle
    # sin(a/2)/a is smooth through zero; use the series limit 1/2 there.
    small = angle < 1e-12
    scale = np.where(small, 0.5, np.sin(half) / np.where(small, 1.0, angle))
    return np.concatenate([np.cos(half), v * scale], axis=-1)


def rotvec_from_quat(q: np.ndarray) -> np.ndarray:
    """Log map: quaternion to rotation vector with angle in ``[0, pi]``.

    At the antipodal singularity (angle ``pi``) the axis sign is chosen so
    its z-component is non-negative.
    """
    q = np.asarray(q, dtype=np.float64)
    # q and -q encode the same rotation; pick the w >= 0 representative so
    # the recovered angle lies in [0, pi].
    q = np.where(q[..., :1] < 0.0, -q, q)
    xyz = q[..., 1:]
    sin_half = np.linalg.norm(xyz, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(sin_half[..., 0], q[..., 0])[..., None]
    small = sin_half < 1e-12
    axis = xyz / np.where(small, 1.0, sin_half)
    # Antipodal tie-break: at angle pi flip the axis toward +z.
    at_pi = np.abs(angle - np.pi) < 1e-12
    flip = at_pi & (axis[..., 2:3] < 0.0)
    axis = np.where(flip, -axis, axis)
    return np.where(small, 2.0 * xyz, axis * angle)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices of shape ``(..., 3, 3)``."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = np.moveaxis(q, -1, 0)
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`quat_to_matrix` (Shepperd's method, batched)."""
    m = np.asarray(m, dtype=np.float64)
    batch = m.shape[:-2]
    out = np.empty(batch + (4,))
    # Per-element loop is fine: this is never on a hot path.
    for idx in np.ndindex(batch or (1,)):
        r = m[idx] if batch else m
        t = np.trace(r)
        if t > 0:
            s = np.sqrt(t + 1.0) * 2.0
            qv = np.array(
                [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
            )
        else:
            i = int(np.argmax(np.diag(r)))
            j, k = (i + 1) % 3, (i + 2) % 3
            s = np.sqrt(r[i, i] - r[j, j] - r[k, k] + 1.0) * 2.0
            qv = np.empty(4)
            qv[0] = (r[k, j] - r[j, k]) / s
            qv[1 + i] = 0.25 * s
            qv[1 + j] = (r[j, i] + r[i, j]) / s
            qv[1 + k] = (r[k, i] + r[i, k]) / s
        if batch:
            out[idx] = qv
        else:
            out = qv
    return quat_normalize(out)


@dataclass
class Transform:
    """Rigid-body pose: position plus unit-quaternion orientation.

    Both fields broadcast over leading batch dimensions.
    """

    pos: np.ndarray
    quat: np.ndarray

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=np.float64)
        self.quat = np.asarray(self.quat, dtype=np.float64)

    @staticmethod
    def identity(shape: tuple[int, ...] = ()) -> "Transform":
        return Transform(
            np.zeros(shape + (3,)), np.broadcast_to(QUAT_IDENTITY, shape + (4,)).copy()
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points from this frame into the parent frame."""
        return self.pos + quat_rotate(self.quat, points)

    def copy(self) -> "Transform":
        return Transform(self.pos.copy(), self.quat.copy())


def compose(a: Transform, b: Transform) -> Transform:
    """Composition ``a ∘ b``: apply ``b`` first, then ``a``."""
    return Transform(a.pos + quat_rotate(a.quat, b.pos), quat_mul(a.quat, b.quat))


def inverse(t: Transform) -> Transform:
    qi = quat_conjugate(t.quat)
    return Transform(-quat_rotate(qi, t.pos), qi)


def relative_pose(source: Transform, target: Transform) -> Transform:
    """The pose of ``target`` expressed in the ``source`` frame."""
    return compose(inverse(source), target)
