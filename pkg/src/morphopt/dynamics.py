"""Inverse dynamics over module bodies and the joint-effort metric.

Torques come from a recursive Newton-Euler pass over the chain's module
bodies (outward velocity/acceleration recursion, inward force recursion),
plus J^T f_ext for an external end-effector wrench. Gravity is 9.81 m/s^2
along -z of {W}.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kinematics import KinematicChain, chain_state, fk_batch, jacobian

__all__ = [
    "GRAVITY",
    "TorqueTrajectory",
    "inverse_dynamics",
    "trajectory_torques",
    "effort_metric",
    "torque_feasible",
    "differentiate_joint_trajectory",
    "export_torques_csv",
]

GRAVITY = 9.81


@dataclass(frozen=True)
class TorqueTrajectory:
    """Per-loop joint torques (N, dof) with the per-joint limits."""

    torques: np.ndarray
    limits: np.ndarray

    def __post_init__(self):
        torques = np.atleast_2d(np.asarray(self.torques, dtype=float))
        limits = np.asarray(self.limits, dtype=float)
        if torques.shape[1] != limits.shape[0]:
            raise ValueError(
                f"torque columns ({torques.shape[1]}) must match limits ({limits.shape[0]})"
            )
        object.__setattr__(self, "torques", torques)
        object.__setattr__(self, "limits", limits)

    @property
    def loops(self) -> int:
        return self.torques.shape[0]


def trajectory_torques(chain: KinematicChain, q, qd, qdd, wrenches=None) -> np.ndarray:
    """Newton-Euler torques for an (N, dof) trajectory, vectorized over N.

    ``wrenches`` is an optional (N, 6) world-frame [force; torque] the EE
    applies to the environment; it enters exactly as J^T w.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    qd = np.atleast_2d(np.asarray(qd, dtype=float))
    qdd = np.atleast_2d(np.asarray(qdd, dtype=float))
    if chain.dof == 0:
        raise ValueError("inverse dynamics undefined for a chain without joints")
    N = q.shape[0]
    n = chain.num_modules

    # parent->child transforms: D_i = post_{i-1} @ pre_i @ rot_i(q)
    rots = np.empty((n, N, 3, 3))
    offs = np.empty((n, 3))
    prev_post = np.eye(4)
    for i, seg in enumerate(chain.segments):
        fixed = prev_post @ seg.pre
        offs[i] = fixed[:3, 3]
        if seg.joint_index >= 0:
            rot = _axis_rotations(seg.axis, q[:, seg.joint_index])
            rots[i] = fixed[:3, :3] @ rot
        else:
            rots[i] = np.broadcast_to(fixed[:3, :3], (N, 3, 3))
        prev_post = seg.post

    omega = np.zeros((N, 3))
    alpha = np.zeros((N, 3))
    # base acceleration set to -gravity so gravity torques emerge from the recursion
    acc = np.broadcast_to(chain.base[:3, :3].T @ np.array([0.0, 0.0, GRAVITY]), (N, 3)).copy()

    omegas = np.empty((n, N, 3))
    alphas = np.empty((n, N, 3))
    f_body = np.empty((n, N, 3))
    n_body = np.empty((n, N, 3))
    for i, seg in enumerate(chain.segments):
        rt = rots[i].transpose(0, 2, 1)
        omega_p = _rotate(rt, omega)
        alpha_p = _rotate(rt, alpha)
        acc = _rotate(rt, acc + np.cross(alpha, offs[i]) + np.cross(omega, np.cross(omega, offs[i])))
        if seg.joint_index >= 0:
            axis = seg.axis
            qd_i = qd[:, seg.joint_index : seg.joint_index + 1]
            qdd_i = qdd[:, seg.joint_index : seg.joint_index + 1]
            omega = omega_p + qd_i * axis
            alpha = alpha_p + np.cross(omega_p, qd_i * axis) + qdd_i * axis
        else:
            omega = omega_p
            alpha = alpha_p
        omegas[i] = omega
        alphas[i] = alpha
        com = chain.com_offsets[i]
        acc_com = acc + np.cross(alpha, com) + np.cross(omega, np.cross(omega, com))
        f_body[i] = chain.masses[i] * acc_com
        inertia = chain.inertias[i]
        n_body[i] = (inertia @ alpha[..., None])[..., 0] + np.cross(
            omega, (inertia @ omega[..., None])[..., 0]
        )

    torques = np.zeros((N, chain.dof))
    f_child = np.zeros((N, 3))
    n_child = np.zeros((N, 3))
    for i in range(n - 1, -1, -1):
        seg = chain.segments[i]
        com = chain.com_offsets[i]
        # child contributions arrive already expressed in frame i about its origin
        f_i = f_body[i] + f_child
        n_i = n_body[i] + np.cross(com, f_body[i]) + n_child
        if seg.joint_index >= 0:
            torques[:, seg.joint_index] = np.einsum("nj,j->n", n_i, seg.axis)
        f_child = _rotate(rots[i], f_i)
        n_child = _rotate(rots[i], n_i) + np.cross(offs[i], f_child)

    if wrenches is not None:
        wrenches = np.atleast_2d(np.asarray(wrenches, dtype=float))
        jac = jacobian_batch(chain, q)
        torques = torques + np.einsum("nij,nj->ni", jac.transpose(0, 2, 1), wrenches)
    return torques


def _axis_rotations(axis, angles):
    k = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    c = np.cos(angles)[:, None, None]
    s = np.sin(angles)[:, None, None]
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def _rotate(mats, vecs):
    return np.einsum("nij,nj->ni", mats, vecs) if mats.ndim == 3 else vecs @ mats.T


def jacobian_batch(chain: KinematicChain, q_series, fk=None) -> np.ndarray:
    """Geometric Jacobians stacked over an (N, dof) series -> (N, 6, dof)."""
    q_series = np.atleast_2d(np.asarray(q_series, dtype=float))
    if fk is None:
        fk = fk_batch(chain, q_series)
    N = q_series.shape[0]
    ee = fk["ee_transform"][:, :3, 3]
    jac = np.empty((N, 6, chain.dof))
    for j, si in enumerate(chain.joint_segment):
        axis_w = fk["mid_rotations"][:, si] @ chain.segments[si].axis
        lever = ee - fk["mid_positions"][:, si]
        jac[:, :3, j] = np.cross(axis_w, lever)
        jac[:, 3:, j] = axis_w
    return jac


def inverse_dynamics(chain: KinematicChain, q, qd, qdd, f_ext=None) -> np.ndarray:
    """Joint torques M(q)qdd + B(q,qd)qd + g(q) + J^T f_ext for one sample."""
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise ValueError(f"expected {chain.dof} joint values, got shape {q.shape}")
    torques = trajectory_torques(chain, q[None], np.asarray(qd)[None], np.asarray(qdd)[None])[0]
    if f_ext is not None:
        torques = torques + jacobian(chain, q).T @ np.asarray(f_ext, dtype=float)
    return torques


def effort_metric(trajectory: TorqueTrajectory) -> float:
    """Mean over control loops of the summed absolute joint torques."""
    if trajectory.loops == 0:
        raise ValueError("effort metric needs at least one control loop")
    return float(np.abs(trajectory.torques).sum(axis=1).mean())


def torque_feasible(trajectory: TorqueTrajectory):
    """Strict per-sample check |tau_ij| < tau_max(j).

    Returns (feasible, first_violation_loop) with None when feasible.
    """
    over = np.abs(trajectory.torques) >= trajectory.limits[None, :]
    if not over.any():
        return True, None
    return False, int(np.argmax(over.any(axis=1)))


def differentiate_joint_trajectory(q_series, dt: float):
    """Velocities and accelerations of an (N, dof) series.

    Central differences on the interior, one-sided stencils at the ends;
    both are exact for quadratics.
    """
    q = np.atleast_2d(np.asarray(q_series, dtype=float))
    if q.shape[0] < 3:
        raise ValueError("need at least 3 samples to differentiate")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    qd = np.empty_like(q)
    qd[1:-1] = (q[2:] - q[:-2]) / (2.0 * dt)
    qd[0] = (-3.0 * q[0] + 4.0 * q[1] - q[2]) / (2.0 * dt)
    qd[-1] = (3.0 * q[-1] - 4.0 * q[-2] + q[-3]) / (2.0 * dt)
    qdd = np.empty_like(q)
    qdd[1:-1] = (q[2:] - 2.0 * q[1:-1] + q[:-2]) / dt**2
    qdd[0] = (q[0] - 2.0 * q[1] + q[2]) / dt**2
    qdd[-1] = (q[-1] - 2.0 * q[-2] + q[-3]) / dt**2
    return qd, qdd


def export_torques_csv(trajectory: TorqueTrajectory, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["loop"] + [f"tau_{j}" for j in range(trajectory.torques.shape[1])])
        for i, row in enumerate(trajectory.torques):
            writer.writerow([i] + [f"{v:.9g}" for v in row])
