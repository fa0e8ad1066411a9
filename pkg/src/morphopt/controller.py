"""Joint-space tracking of Cartesian references.

Multi-restart damped-least-squares IK produces warm starts; a
receding-horizon controller then emits joint-velocity commands. The
horizon model follows the forward-Euler state propagation with the
Jacobian frozen at the current configuration, which condenses each step
into a small box-constrained least-squares problem solved exactly by an
active-set method. Commands respect per-joint velocity boxes; integrated
positions are clamped to the joint range (flagged if that ever binds).

Orientation errors use the vector part of o_ref^-1 * o; in tool-axis-only
mode its component about the reference tool z axis is ignored, leaving a
5-dimensional task.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import matrix_from_quat, orientation_error, quat_from_matrix
from .kinematics import KinematicChain
from .task import ReferenceTrajectory

if os.environ.get("MORPHOPT_NO_JIT"):
    _fastpath = None
else:
    try:
        from . import _fastpath
    except ImportError:  # numba not installed; numpy reference paths serve
        _fastpath = None

__all__ = [
    "ControllerConfig",
    "ReferenceWindow",
    "Rollout",
    "ik_solve",
    "warm_starts",
    "mpc_step",
    "rollout",
    "export_rollout_csv",
]


@dataclass(frozen=True)
class ControllerConfig:
    position_gain: float = 10.0
    orientation_gain: float = 4.0
    regularizer_gain: float = 1e-4
    horizon: int = 10
    dt: float = 0.01

    def __post_init__(self):
        if self.position_gain < 0 or self.orientation_gain < 0 or self.regularizer_gain < 0:
            raise ValueError("gains must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class ReferenceWindow:
    """Reference poses for the horizon cost nodes."""

    positions: np.ndarray  # (H, 3)
    quaternions: np.ndarray  # (H, 4)
    tool_axis_only: bool


def reference_window(trajectory: ReferenceTrajectory, loop_index: int, horizon: int):
    """Window of future samples; the first penalized node sits two steps out."""
    idx = np.minimum(loop_index + 2 + np.arange(horizon), trajectory.N - 1)
    return ReferenceWindow(
        positions=trajectory.positions[idx],
        quaternions=trajectory.quaternions[idx],
        tool_axis_only=bool(trajectory.tool_axis_only[min(loop_index, trajectory.N - 1)]),
    )


def _fk_arrays(chain: KinematicChain, q):
    """Lean FK: EE transform plus world joint origins and axes."""
    t = chain.base
    origins = np.empty((chain.dof, 3))
    axes = np.empty((chain.dof, 3))
    for seg in chain.segments:
        t = t @ seg.pre
        if seg.joint_index >= 0:
            angle = q[seg.joint_index]
            c, s = np.cos(angle), np.sin(angle)
            a = seg.axis
            k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
            rot = np.eye(4)
            rot[:3, :3] = np.eye(3) + s * k + (1.0 - c) * (k @ k)
            t = t @ rot
            origins[seg.joint_index] = t[:3, 3]
            axes[seg.joint_index] = t[:3, :3] @ a
        t = t @ seg.post
    return t, origins, axes


def _jacobian_from_arrays(ee_pos, origins, axes):
    jac = np.empty((6, axes.shape[0]))
    jac[:3] = np.cross(axes, ee_pos[None, :] - origins).T
    jac[3:] = axes.T
    return jac


def _task_residual(t_ee, target_pos, target_quat, axis_only):
    """Position error and (optionally projected) orientation error vector."""
    pos_err = t_ee[:3, 3] - np.asarray(target_pos, dtype=float)
    quat = quat_from_matrix(t_ee[:3, :3])
    ori_err = orientation_error(quat, target_quat)
    if axis_only:
        ori_err = ori_err.copy()
        ori_err[2] = 0.0
    return pos_err, ori_err, quat


def ik_solve(
    chain: KinematicChain,
    target,
    q_init,
    mode: str = "tool-axis-only",
    pos_tol: float = 1e-4,
    ori_tol: float = 1e-3,
    max_iters: int = 500,
):
    """Damped-least-squares IK from q_init; None when it fails to converge.

    Joint limits are enforced by clamping each iterate. Non-convergence is
    reported, not raised — callers retry from other seeds.
    """
    if chain.dof < 1:
        return None
    axis_only = mode == "tool-axis-only"
    target_pos = np.asarray(target.position, dtype=float)
    target_quat = np.asarray(target.orientation, dtype=float)
    ref_rot = matrix_from_quat(target_quat)
    if _fastpath is not None:
        q, ok = _fastpath.ik_arrays(
            chain, target_pos, target_quat, ref_rot, q_init, axis_only,
            pos_tol, ori_tol, max_iters,
        )
        return q if ok else None
    lo, hi = chain.joint_limits[:, 0], chain.joint_limits[:, 1]
    q = np.clip(np.asarray(q_init, dtype=float), lo, hi)
    damping = 0.05**2
    blocked = np.zeros(chain.dof, dtype=bool)
    last_norm = np.inf
    stall = 0
    for _ in range(max_iters):
        t_ee, origins, axes = _fk_arrays(chain, q)
        pos_err, ori_err, quat = _task_residual(t_ee, target_pos, target_quat, axis_only)
        if _ik_converged(t_ee, quat, target_pos, target_quat, axis_only, pos_tol, ori_tol, ref_rot):
            return q
        jac = _jacobian_from_arrays(t_ee[:3, 3], origins, axes)
        j_task = np.vstack([jac[:3], 0.5 * ref_rot.T @ jac[3:]])
        if axis_only:
            j_task[5] = 0.0
        if blocked.any():
            j_task = j_task.copy()
            j_task[:, blocked] = 0.0  # joints wedged at a limit sit this step out
        residual = np.concatenate([pos_err, ori_err])
        norm = np.linalg.norm(residual)
        # clamped error keeps distant targets from exploding the step
        scaled = residual * min(1.0, 0.3 / max(norm, 1e-12))
        jjt = j_task @ j_task.T
        jjt[np.diag_indices_from(jjt)] += damping
        dq = -j_task.T @ np.linalg.solve(jjt, scaled)
        step = np.linalg.norm(dq)
        if step > 0.5:
            dq *= 0.5 / step
        q_raw = q + dq
        q = np.clip(q_raw, lo, hi)
        blocked = ((q_raw < lo) & (dq < 0)) | ((q_raw > hi) & (dq > 0))
        stall = stall + 1 if norm > last_norm - 1e-10 else 0
        last_norm = min(last_norm, norm)
        if stall >= 40:
            return None
    return None


def _ik_converged(t_ee, quat, target_pos, target_quat, axis_only, pos_tol, ori_tol, ref_rot):
    if np.linalg.norm(t_ee[:3, 3] - target_pos) >= pos_tol:
        return False
    if axis_only:
        tilt = np.arccos(np.clip(t_ee[:3, 2] @ ref_rot[:, 2], -1.0, 1.0))
        return tilt < ori_tol
    dot = abs(float(quat @ target_quat))
    return 2.0 * np.arccos(np.clip(dot, -1.0, 1.0)) < ori_tol


def warm_starts(
    chain: KinematicChain,
    trajectory: ReferenceTrajectory,
    k: int = 5,
    rng_seed: int = 0,
    retry_budget: int = 10,
):
    """Distinct IK solutions for the first reference pose, up to k of them.

    Solutions closer than 0.05 rad in joint space count as duplicates and
    trigger a re-seed. An empty list marks the design unreachable.
    """
    if chain.dof < 1:
        return []
    target_pos = trajectory.positions[0]
    base_pos = chain.base[:3, 3]
    if np.linalg.norm(target_pos - base_pos) > chain.total_length():
        return []
    from .kinematics import EePose

    target = EePose(position=target_pos, orientation=trajectory.quaternions[0])
    mode = "tool-axis-only" if trajectory.tool_axis_only[0] else "full"
    rng = np.random.default_rng(rng_seed)
    solutions = []
    attempts = 0
    while len(solutions) < k and attempts < k + retry_budget:
        attempts += 1
        q_init = rng.uniform(chain.joint_limits[:, 0], chain.joint_limits[:, 1])
        q = ik_solve(chain, target, q_init, mode=mode)
        if q is None:
            continue
        if any(np.linalg.norm(q - prior) < 0.05 for prior in solutions):
            continue
        solutions.append(q)
    return solutions


def _mpc_matrices(chain, q, qd_prev, window, config, jac_prev):
    """Condensed least-squares data for one control step."""
    H = config.horizon
    d = chain.dof
    dt = config.dt
    t_ee, origins, axes = _fk_arrays(chain, q)
    jac = _jacobian_from_arrays(t_ee[:3, 3], origins, axes)
    jdot_qd = np.zeros(6) if jac_prev is None else ((jac - jac_prev) / dt) @ qd_prev
    quat = quat_from_matrix(t_ee[:3, :3])
    p0 = t_ee[:3, 3]
    ref_rot = matrix_from_quat(window.quaternions[0])
    proj = np.eye(3)
    if window.tool_axis_only:
        proj = np.diag([1.0, 1.0, 0.0])
    w_pos = np.sqrt(config.position_gain)
    w_ori = np.sqrt(config.orientation_gain)
    b_block = np.vstack(
        [w_pos * dt * jac[:3], w_ori * dt * 0.5 * proj @ ref_rot.T @ jac[3:]]
    )
    errs = np.empty((H, 6))
    for k in range(H):
        n = k + 2  # first penalized node (Eq-2 style cost over future nodes)
        # configuration drift of the frozen Jacobian, linearized at qd_prev
        drift = (n * (n - 1) / 2.0) * dt * dt
        errs[k, :3] = w_pos * (p0 + drift * jdot_qd[:3] - window.positions[k])
        eps = orientation_error(quat, window.quaternions[k])
        errs[k, 3:] = w_ori * (proj @ (eps + 0.5 * ref_rot.T @ (drift * jdot_qd[3:])))
    # command u_l acts on positions from node l+1 on: row k penalizes node
    # k+2 and therefore sums commands 0..k+1
    lower = np.tril(np.ones((H, H)), 1)
    a_mat = np.kron(lower, b_block)
    return a_mat, errs.reshape(-1), jac, quat, t_ee


def _command_bounds(chain, q, config):
    H, d = config.horizon, chain.dof
    vmax = chain.velocity_limits
    lb = np.tile(-vmax, H)
    ub = np.tile(vmax, H)
    # keep the executed command inside the position box too
    lb[:d] = np.maximum(lb[:d], (chain.joint_limits[:, 0] - q) / config.dt)
    ub[:d] = np.minimum(ub[:d], (chain.joint_limits[:, 1] - q) / config.dt)
    bad = lb > ub
    if bad.any():
        mid = 0.5 * (lb[bad] + ub[bad])
        lb[bad] = ub[bad] = mid
    return lb, ub


def _box_qp(h_mat, g, lb, ub, tol: float = 1e-8, max_iters: int = 60):
    """Minimize 1/2 x^T H x - g^T x over a box; H must be SPD.

    Primal active-set with ratio tests; exact on the working set, so the
    returned point satisfies the KKT conditions to ``tol``.
    """
    n = g.shape[0]
    x = np.clip(np.linalg.solve(h_mat, g), lb, ub)
    at_lower = x <= lb + 1e-14
    at_upper = x >= ub - 1e-14
    for _ in range(max_iters):
        free = ~(at_lower | at_upper)
        x_fixed = np.where(at_lower, lb, np.where(at_upper, ub, 0.0))
        if free.any():
            rhs = g[free] - h_mat[np.ix_(free, ~free)] @ x_fixed[~free]
            x_free = np.linalg.solve(h_mat[np.ix_(free, free)], rhs)
            target = x.copy()
            target[~free] = x_fixed[~free]
            target[free] = x_free
        else:
            target = x_fixed
        step = target - x
        # ratio test: walk toward the working-set solution until a bound blocks
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha_hi = np.where(step > tol, (ub - x) / step, np.inf)
            alpha_lo = np.where(step < -tol, (lb - x) / step, np.inf)
        alpha = min(1.0, float(np.min(np.minimum(alpha_hi, alpha_lo))))
        x = np.clip(x + alpha * step, lb, ub)
        if alpha < 1.0:
            blocked = (np.minimum(alpha_hi, alpha_lo) <= alpha + 1e-12) & free
            at_lower |= blocked & (step < 0)
            at_upper |= blocked & (step > 0)
            continue
        grad = h_mat @ x - g
        release_lo = at_lower & (grad < -tol)
        release_up = at_upper & (grad > tol)
        if not (release_lo.any() or release_up.any()):
            return x, True
        worst = np.argmax(np.abs(grad * (release_lo | release_up)))
        at_lower[worst] = False
        at_upper[worst] = False
    return x, False


def mpc_step(
    chain: KinematicChain,
    q,
    qd_prev,
    window: ReferenceWindow,
    config: ControllerConfig,
    jac_prev=None,
):
    """First command of the horizon-optimal joint-velocity sequence.

    ``jac_prev`` (the previous loop's Jacobian) feeds the finite-difference
    Jdot qd drift term. Returns (u, info) where info carries the solver
    flag plus the FK bits the rollout needs. On solver failure u is zero
    and the flag is set.
    """
    q = np.asarray(q, dtype=float)
    qd_prev = np.asarray(qd_prev, dtype=float)
    a_mat, err, jac, quat, t_ee = _mpc_matrices(chain, q, qd_prev, window, config, jac_prev)
    h_mat = a_mat.T @ a_mat
    h_mat[np.diag_indices_from(h_mat)] += config.regularizer_gain
    g = -(a_mat.T @ err)
    lb, ub = _command_bounds(chain, q, config)
    u_all = np.linalg.solve(h_mat, g)
    solved = True
    if (u_all < lb - 1e-12).any() or (u_all > ub + 1e-12).any():
        u_all, solved = _box_qp(h_mat, g, lb, ub)
    if not solved:
        u = np.zeros(chain.dof)
    else:
        u = u_all[: chain.dof]
    info = {"solved": solved, "jacobian": jac, "ee_transform": t_ee, "ee_quaternion": quat}
    return u, info


@dataclass
class Rollout:
    """Closed-loop execution record over all N control loops."""

    times: np.ndarray
    q_series: np.ndarray
    u_series: np.ndarray
    ee_positions: np.ndarray
    ee_quaternions: np.ndarray
    pos_err_sq: np.ndarray
    ori_err_sq: np.ndarray
    jacobians: np.ndarray
    solver_failed: np.ndarray
    position_clamped: np.ndarray
    aborted_at: int | None = None
    abort_fill: float = 0.0

    @property
    def err_sq(self) -> np.ndarray:
        return self.pos_err_sq + self.ori_err_sq

    @property
    def loops(self) -> int:
        return self.times.shape[0]


def rollout(
    chain: KinematicChain,
    q0,
    trajectory: ReferenceTrajectory,
    config: ControllerConfig,
    abort_err_sq: float | None = None,
    abort_min_sum: float | None = None,
) -> Rollout:
    """Iterate the controller over every trajectory sample.

    The optional abort pair stops a rollout once the accumulated squared
    error alone certifies tracking infeasibility (sum > abort_min_sum) and
    the instantaneous error has diverged (> abort_err_sq); remaining loops
    are filled pessimistically for ranking.
    """
    N = trajectory.N
    d = chain.dof
    if _fastpath is not None:
        (q_series, u_series, ee_pos, ee_quat, pos_err_sq, ori_err_sq,
         jacobians, solver_failed, pos_clamped, aborted_at, abort_fill,
         ) = _fastpath.rollout_arrays(
            chain, q0, trajectory, config,
            abort_err_sq=abort_err_sq, abort_min_sum=abort_min_sum,
        )
        return Rollout(
            times=trajectory.times.copy(),
            q_series=q_series,
            u_series=u_series,
            ee_positions=ee_pos,
            ee_quaternions=ee_quat,
            pos_err_sq=pos_err_sq,
            ori_err_sq=ori_err_sq,
            jacobians=jacobians,
            solver_failed=solver_failed,
            position_clamped=pos_clamped,
            aborted_at=None if aborted_at < 0 else int(aborted_at),
            abort_fill=float(abort_fill),
        )
    q = np.asarray(q0, dtype=float).copy()
    qd_prev = np.zeros(d)
    jac_prev = None
    out = Rollout(
        times=trajectory.times.copy(),
        q_series=np.zeros((N, d)),
        u_series=np.zeros((N, d)),
        ee_positions=np.zeros((N, 3)),
        ee_quaternions=np.zeros((N, 4)),
        pos_err_sq=np.zeros(N),
        ori_err_sq=np.zeros(N),
        jacobians=np.zeros((N, 6, d)),
        solver_failed=np.zeros(N, dtype=bool),
        position_clamped=np.zeros(N, dtype=bool),
    )
    err_sum = 0.0
    for i in range(N):
        window = reference_window(trajectory, i, config.horizon)
        u, info = mpc_step(chain, q, qd_prev, window, config, jac_prev)
        out.q_series[i] = q
        out.u_series[i] = u
        out.jacobians[i] = info["jacobian"]
        out.solver_failed[i] = not info["solved"]
        t_ee = info["ee_transform"]
        out.ee_positions[i] = t_ee[:3, 3]
        out.ee_quaternions[i] = info["ee_quaternion"]
        pos_err = t_ee[:3, 3] - trajectory.positions[i]
        ori_err = orientation_error(info["ee_quaternion"], trajectory.quaternions[i])
        if trajectory.tool_axis_only[i]:
            ori_err = ori_err.copy()
            ori_err[2] = 0.0
        out.pos_err_sq[i] = float(pos_err @ pos_err)
        out.ori_err_sq[i] = float(ori_err @ ori_err)
        err_sum += out.pos_err_sq[i] + out.ori_err_sq[i]
        if (
            abort_err_sq is not None
            and abort_min_sum is not None
            and err_sum > abort_min_sum
            and out.pos_err_sq[i] + out.ori_err_sq[i] > abort_err_sq
        ):
            out.aborted_at = i
            out.abort_fill = min(out.pos_err_sq[i] + out.ori_err_sq[i], abort_err_sq * 4.0)
            break
        q_next = q + u * config.dt
        clamped = np.clip(q_next, chain.joint_limits[:, 0], chain.joint_limits[:, 1])
        out.position_clamped[i] = bool((np.abs(clamped - q_next) > 1e-12).any())
        q = clamped
        qd_prev = u
        jac_prev = info["jacobian"]
    return out


def export_rollout_csv(roll: Rollout, path) -> None:
    d = roll.q_series.shape[1]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t"]
            + [f"q_{j}" for j in range(d)]
            + [f"u_{j}" for j in range(d)]
            + ["residual_sq", "solver_failed", "position_clamped"]
        )
        stop = roll.loops if roll.aborted_at is None else roll.aborted_at + 1
        for i in range(stop):
            writer.writerow(
                [f"{roll.times[i]:.6f}"]
                + [f"{v:.9g}" for v in roll.q_series[i]]
                + [f"{v:.9g}" for v in roll.u_series[i]]
                + [f"{roll.pos_err_sq[i] + roll.ori_err_sq[i]:.9g}"]
                + [int(roll.solver_failed[i]), int(roll.position_clamped[i])]
            )
