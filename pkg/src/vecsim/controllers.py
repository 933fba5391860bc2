"""Task-space and joint-space controllers.

Differential IK supports four singularity treatments (Moore-Penrose
pseudo-inverse, adaptive SVD truncation, Jacobian transpose, damped least
squares). Joint impedance and operational-space control reuse the dynamics
module for inertia and gravity terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import GRAVITY, bias_forces, mass_matrix
from .maths import Transform, quat_conjugate, quat_mul, rotvec_from_quat

IK_METHODS = ("pinv", "svd_adaptive", "transpose", "damped")


@dataclass
class IkConfig:
    """Differential IK configuration."""

    method: str = "damped"
    command_mode: str = "pose"        # pose | position
    command_frame: str = "absolute"   # absolute | relative
    damping: float = 0.05             # damped least-squares lambda
    singular_value_cutoff: float | None = None  # default 0.05 * sigma_max
    transpose_gain: float = 1.0
    step_scale: float = 1.0

    def __post_init__(self):
        if self.method not in IK_METHODS:
            raise ValueError(f"unknown IK method {self.method!r}")
        if self.command_mode not in ("pose", "position"):
            raise ValueError("command_mode must be 'pose' or 'position'")
        if self.command_frame not in ("absolute", "relative"):
            raise ValueError("command_frame must be 'absolute' or 'relative'")
        if self.damping < 0 or self.transpose_gain <= 0:
            raise ValueError("damping must be >= 0 and transpose_gain > 0")
        if self.singular_value_cutoff is not None and self.singular_value_cutoff < 0:
            raise ValueError("singular_value_cutoff must be >= 0")


def pose_error(current: Transform, target: Transform,
               mode: str = "pose") -> np.ndarray:
    """Task-space error ``[position, axis*angle]`` with angle in [0, pi].

    ``position`` mode returns only the translation rows.
    """
    dp = target.pos - current.pos
    if mode == "position":
        return dp
    if mode != "pose":
        raise ValueError("mode must be 'pose' or 'position'")
    q_err = quat_mul(target.quat, quat_conjugate(current.quat))
    return np.concatenate([dp, rotvec_from_quat(q_err)], axis=-1)


def diff_ik_step(j: np.ndarray, dx: np.ndarray, config: IkConfig) -> np.ndarray:
    """One differential IK update ``dq`` from a task-space error ``dx``."""
    j = np.asarray(j, dtype=np.float64)
    dx = np.asarray(dx, dtype=np.float64)
    if j.shape[:-2] != dx.shape[:-1] or j.shape[-2] != dx.shape[-1]:
        raise ValueError(f"jacobian {j.shape} does not match error {dx.shape}")
    method = config.method
    if method == "transpose":
        dq = config.transpose_gain * np.einsum("...kn,...k->...n", j, dx)
    elif method == "damped":
        lam2 = config.damping ** 2
        k = j.shape[-2]
        jjt = np.einsum("...kn,...ln->...kl", j, j)
        jjt[..., np.arange(k), np.arange(k)] += lam2
        y = np.linalg.solve(jjt, dx[..., None])[..., 0]
        dq = np.einsum("...kn,...k->...n", j, y)
    else:
        u, s, vt = np.linalg.svd(j, full_matrices=False)
        if method == "pinv":
            cutoff = 1e-12
        else:  # svd_adaptive
            smax = s.max(axis=-1, keepdims=True)
            cutoff = (config.singular_value_cutoff
                      if config.singular_value_cutoff is not None
                      else 0.05 * smax)
        inv_s = np.where(s >= cutoff, 1.0 / np.where(s == 0, 1.0, s), 0.0)
        dq = np.einsum("...nk,...k,...mk,...m->...n", vt.swapaxes(-1, -2),
                       inv_s, u, dx)
    return config.step_scale * dq


def joint_impedance(q: np.ndarray, qd: np.ndarray, q_des: np.ndarray,
                    stiffness: np.ndarray, damping: np.ndarray, *,
                    tree=None, gravity_comp: bool = False,
                    inertia_scaling: bool = False, gravity=GRAVITY,
                    qd_des: np.ndarray | None = None,
                    root_pose: Transform | None = None) -> np.ndarray:
    """Joint-space impedance control with optional dynamics compensation.

    ``tau = [M(q) @]? (K (q_des - q) - D qd) [+ gravity bias]``; the
    bracketed terms follow the flags. Gains may vary per step and per joint
    (variable stiffness / variable impedance).
    """
    stiffness = np.asarray(stiffness, dtype=np.float64)
    damping = np.asarray(damping, dtype=np.float64)
    if np.any(stiffness < 0) or np.any(damping < 0):
        raise ValueError("impedance gains must be >= 0")
    err_d = -qd if qd_des is None else qd_des - qd
    tau = stiffness * (q_des - q) + damping * err_d
    if inertia_scaling:
        if tree is None:
            raise ValueError("inertia scaling requires the kinematic tree")
        m = mass_matrix(tree, q, root_pose=root_pose)
        tau = np.einsum("...ij,...j->...i", m, tau)
    if gravity_comp:
        if tree is None:
            raise ValueError("gravity compensation requires the kinematic tree")
        tau = tau + bias_forces(tree, q, np.zeros_like(q), gravity=gravity,
                                root_pose=root_pose)
    return tau


@dataclass
class TaskSpaceGains:
    """Diagonal task-space impedance with axis selection and feedforward."""

    stiffness: np.ndarray
    damping: np.ndarray
    selection: np.ndarray = field(default_factory=lambda: np.ones(6))
    feedforward: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        self.stiffness = np.asarray(self.stiffness, dtype=np.float64)
        self.damping = np.asarray(self.damping, dtype=np.float64)
        self.selection = np.asarray(self.selection, dtype=np.float64)
        self.feedforward = np.asarray(self.feedforward, dtype=np.float64)
        if np.any(self.stiffness < 0) or np.any(self.damping < 0):
            raise ValueError("task-space gains must be >= 0")
        if not np.all((self.selection == 0) | (self.selection == 1)):
            raise ValueError("selection matrix entries must be 0 or 1")


def osc(j: np.ndarray, m: np.ndarray, dx: np.ndarray, xd: np.ndarray,
        gains: TaskSpaceGains, *, gravity_bias: np.ndarray | None = None,
        null_posture: tuple | None = None, q: np.ndarray | None = None,
        qd: np.ndarray | None = None, reg: float = 0.0) -> np.ndarray:
    """Operational-space control torque.

    ``Lambda = inv(J M^-1 J^T)`` (rank-deficient cases fall back to a
    truncated pseudo-inverse; ``reg`` adds optional Tikhonov damping),
    ``F = Lambda (S (K dx - D xd)) + (I - S) F_ff`` and
    ``tau = J^T F [+ gravity bias] [+ null-space posture]`` where the
    posture term uses the dynamically consistent null-space projector.

    Raises:
        ValueError: if the mass matrix is not positive-definite.
    """
    j = np.asarray(j, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    k = j.shape[-2]
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise ValueError("mass matrix is not positive-definite") from None
    m_inv = np.linalg.inv(m)
    a = j @ m_inv @ j.swapaxes(-1, -2)
    if reg > 0.0:
        a = a + reg * np.eye(k)
    lam = np.linalg.pinv(a, rcond=1e-10)

    s = gains.selection[..., :k]
    wrench = s * (gains.stiffness[..., :k] * dx - gains.damping[..., :k] * xd)
    f = np.einsum("...kl,...l->...k", lam, wrench)
    f = f + (1.0 - s) * gains.feedforward[..., :k]
    tau = np.einsum("...kn,...k->...n", j, f)
    if gravity_bias is not None:
        tau = tau + gravity_bias
    if null_posture is not None:
        if q is None or qd is None:
            raise ValueError("null-space posture requires q and qd")
        q_ref, k_n, d_n = null_posture
        j_bar = m_inv @ j.swapaxes(-1, -2) @ lam  # dynamically consistent
        n = np.eye(j.shape[-1]) - j.swapaxes(-1, -2) @ j_bar.swapaxes(-1, -2)
        tau_posture = k_n * (q_ref - q) - d_n * qd
        tau = tau + np.einsum("...ij,...j->...i", n, tau_posture)
    return tau
