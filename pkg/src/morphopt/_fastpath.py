"""Compiled kernels for the evaluation hot loops (optional, needs numba).

Faithful ports of the numpy reference paths in ``controller`` and
``collision``: closed-loop rollout, damped-least-squares IK, and the
segment-box distance sweep. The public entry points mirror the reference
signatures and are only used when numba imports cleanly; parity against
the reference implementations is covered by tests.

The per-step tracking problem min ||A U + e||^2 + lam ||U||^2 has
A = L (x) B with L fixed per horizon, so H = A^T A = O (x) B^T B with
O = L^T L. The unconstrained solve diagonalizes O once per rollout and
reduces each step to H small d x d solves; the dense active-set path only
runs when a velocity/position bound actually binds.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["rollout_arrays", "ik_arrays", "segment_box_distances"]


@njit(cache=True)
def _fk(pre, post, axes, jidx, base, q, origins, axes_w):
    t = base.copy()
    n_seg = pre.shape[0]
    for s in range(n_seg):
        t = t @ pre[s]
        j = jidx[s]
        if j >= 0:
            a = axes[s]
            c = np.cos(q[j])
            si = np.sin(q[j])
            # Rodrigues for unit axis a
            rot = np.empty((4, 4))
            rot[:] = 0.0
            rot[3, 3] = 1.0
            x, y, z = a[0], a[1], a[2]
            omc = 1.0 - c
            rot[0, 0] = c + x * x * omc
            rot[0, 1] = x * y * omc - z * si
            rot[0, 2] = x * z * omc + y * si
            rot[1, 0] = y * x * omc + z * si
            rot[1, 1] = c + y * y * omc
            rot[1, 2] = y * z * omc - x * si
            rot[2, 0] = z * x * omc - y * si
            rot[2, 1] = z * y * omc + x * si
            rot[2, 2] = c + z * z * omc
            t = t @ rot
            origins[j, 0] = t[0, 3]
            origins[j, 1] = t[1, 3]
            origins[j, 2] = t[2, 3]
            for r in range(3):
                axes_w[j, r] = t[r, 0] * a[0] + t[r, 1] * a[1] + t[r, 2] * a[2]
        t = t @ post[s]
    return t


@njit(cache=True)
def _jacobian(ee_pos, origins, axes_w, jac):
    dof = origins.shape[0]
    for j in range(dof):
        lx = ee_pos[0] - origins[j, 0]
        ly = ee_pos[1] - origins[j, 1]
        lz = ee_pos[2] - origins[j, 2]
        ax, ay, az = axes_w[j, 0], axes_w[j, 1], axes_w[j, 2]
        jac[0, j] = ay * lz - az * ly
        jac[1, j] = az * lx - ax * lz
        jac[2, j] = ax * ly - ay * lx
        jac[3, j] = ax
        jac[4, j] = ay
        jac[5, j] = az
    return jac


@njit(cache=True)
def _quat_from_mat(t, quat):
    tr = t[0, 0] + t[1, 1] + t[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        quat[0] = 0.25 * s
        quat[1] = (t[2, 1] - t[1, 2]) / s
        quat[2] = (t[0, 2] - t[2, 0]) / s
        quat[3] = (t[1, 0] - t[0, 1]) / s
    elif t[0, 0] >= t[1, 1] and t[0, 0] >= t[2, 2]:
        s = np.sqrt(1.0 + t[0, 0] - t[1, 1] - t[2, 2]) * 2.0
        quat[0] = (t[2, 1] - t[1, 2]) / s
        quat[1] = 0.25 * s
        quat[2] = (t[0, 1] + t[1, 0]) / s
        quat[3] = (t[0, 2] + t[2, 0]) / s
    elif t[1, 1] >= t[2, 2]:
        s = np.sqrt(1.0 + t[1, 1] - t[0, 0] - t[2, 2]) * 2.0
        quat[0] = (t[0, 2] - t[2, 0]) / s
        quat[1] = (t[0, 1] + t[1, 0]) / s
        quat[2] = 0.25 * s
        quat[3] = (t[1, 2] + t[2, 1]) / s
    else:
        s = np.sqrt(1.0 + t[2, 2] - t[0, 0] - t[1, 1]) * 2.0
        quat[0] = (t[1, 0] - t[0, 1]) / s
        quat[1] = (t[0, 2] + t[2, 0]) / s
        quat[2] = (t[1, 2] + t[2, 1]) / s
        quat[3] = 0.25 * s
    if quat[0] < 0.0:
        for r in range(4):
            quat[r] = -quat[r]
    norm = np.sqrt(quat[0] ** 2 + quat[1] ** 2 + quat[2] ** 2 + quat[3] ** 2)
    for r in range(4):
        quat[r] /= norm
    return quat


@njit(cache=True)
def _orientation_error(quat, ref, out):
    # vector part of conj(ref) * quat, sign-normalized to w >= 0
    w = ref[0] * quat[0] + ref[1] * quat[1] + ref[2] * quat[2] + ref[3] * quat[3]
    x = ref[0] * quat[1] - ref[1] * quat[0] - ref[2] * quat[3] + ref[3] * quat[2]
    y = ref[0] * quat[2] + ref[1] * quat[3] - ref[2] * quat[0] - ref[3] * quat[1]
    z = ref[0] * quat[3] - ref[1] * quat[2] + ref[2] * quat[1] - ref[3] * quat[0]
    if w < 0.0:
        x, y, z = -x, -y, -z
    out[0] = x
    out[1] = y
    out[2] = z
    return out


@njit(cache=True)
def _rot_from_quat(q, rot):
    w, x, y, z = q[0], q[1], q[2], q[3]
    rot[0, 0] = 1 - 2 * (y * y + z * z)
    rot[0, 1] = 2 * (x * y - w * z)
    rot[0, 2] = 2 * (x * z + w * y)
    rot[1, 0] = 2 * (x * y + w * z)
    rot[1, 1] = 1 - 2 * (x * x + z * z)
    rot[1, 2] = 2 * (y * z - w * x)
    rot[2, 0] = 2 * (x * z - w * y)
    rot[2, 1] = 2 * (y * z + w * x)
    rot[2, 2] = 1 - 2 * (x * x + y * y)
    return rot


@njit(cache=True)
def _box_qp_dense(h_mat, g, lb, ub, tol, max_iters):
    n = g.shape[0]
    x = np.linalg.solve(h_mat, g)
    for i in range(n):
        if x[i] < lb[i]:
            x[i] = lb[i]
        elif x[i] > ub[i]:
            x[i] = ub[i]
    at_lower = x <= lb + 1e-14
    at_upper = x >= ub - 1e-14
    for _ in range(max_iters):
        free_idx = np.empty(n, dtype=np.int64)
        nf = 0
        for i in range(n):
            if not (at_lower[i] or at_upper[i]):
                free_idx[nf] = i
                nf += 1
        target = np.empty(n)
        for i in range(n):
            if at_lower[i]:
                target[i] = lb[i]
            elif at_upper[i]:
                target[i] = ub[i]
            else:
                target[i] = 0.0
        if nf > 0:
            sub = np.empty((nf, nf))
            rhs = np.empty(nf)
            for a in range(nf):
                ia = free_idx[a]
                acc = g[ia]
                for i in range(n):
                    if at_lower[i] or at_upper[i]:
                        acc -= h_mat[ia, i] * target[i]
                rhs[a] = acc
                for b in range(nf):
                    sub[a, b] = h_mat[ia, free_idx[b]]
            sol = np.linalg.solve(sub, rhs)
            for a in range(nf):
                target[free_idx[a]] = sol[a]
        # ratio test toward the working-set solution
        alpha = 1.0
        for i in range(n):
            step = target[i] - x[i]
            if step > tol:
                cand = (ub[i] - x[i]) / step
                if cand < alpha:
                    alpha = cand
            elif step < -tol:
                cand = (lb[i] - x[i]) / step
                if cand < alpha:
                    alpha = cand
        blocked_any = alpha < 1.0
        for i in range(n):
            x[i] = x[i] + alpha * (target[i] - x[i])
            if x[i] < lb[i]:
                x[i] = lb[i]
            elif x[i] > ub[i]:
                x[i] = ub[i]
        if blocked_any:
            for i in range(n):
                if not (at_lower[i] or at_upper[i]):
                    step = target[i] - x[i]
                    if x[i] <= lb[i] + 1e-12 and step < 0:
                        at_lower[i] = True
                    elif x[i] >= ub[i] - 1e-12 and step > 0:
                        at_upper[i] = True
            continue
        grad = h_mat @ x - g
        worst = -1
        worst_val = tol
        for i in range(n):
            if at_lower[i] and grad[i] < -worst_val:
                worst_val = -grad[i]
                worst = i
            elif at_upper[i] and grad[i] > worst_val:
                worst_val = grad[i]
                worst = i
        if worst < 0:
            return x, True
        at_lower[worst] = False
        at_upper[worst] = False
    return x, False


@njit(cache=True)
def _rollout_kernel(
    pre, post, axes, jidx, base,
    q0, joint_lo, joint_hi, vmax,
    ref_pos, ref_quat, axis_only,
    horizon, dt, w_pos, w_ori, lam,
    v_o, w_o,
    abort_err_sq, abort_min_sum, use_abort,
):
    N = ref_pos.shape[0]
    dof = q0.shape[0]
    H = horizon
    q_series = np.zeros((N, dof))
    u_series = np.zeros((N, dof))
    ee_positions = np.zeros((N, 3))
    ee_quaternions = np.zeros((N, 4))
    pos_err_sq = np.zeros(N)
    ori_err_sq = np.zeros(N)
    jac_series = np.zeros((N, 6, dof))
    solver_failed = np.zeros(N, dtype=np.bool_)
    pos_clamped = np.zeros(N, dtype=np.bool_)
    aborted_at = -1
    abort_fill = 0.0

    sq_pos = np.sqrt(w_pos)
    sq_ori = np.sqrt(w_ori)
    q = q0.copy()
    qd_prev = np.zeros(dof)
    jac = np.zeros((6, dof))
    jac_prev = np.zeros((6, dof))
    have_prev = False
    origins = np.zeros((dof, 3))
    axes_w = np.zeros((dof, 3))
    quat = np.zeros(4)
    eps = np.zeros(3)
    ref_rot = np.zeros((3, 3))
    err_sum = 0.0

    b_block = np.zeros((6, dof))
    errs = np.zeros((H, 6))
    suffix = np.zeros((H, 6))
    gmat = np.zeros((dof, dof))
    rhs = np.zeros((H, dof))
    lb = np.zeros(H * dof)
    ub = np.zeros(H * dof)

    for i in range(N):
        t_ee = _fk(pre, post, axes, jidx, base, q, origins, axes_w)
        _jacobian(t_ee[:3, 3].copy(), origins, axes_w, jac)
        _quat_from_mat(t_ee, quat)
        for r in range(3):
            ee_positions[i, r] = t_ee[r, 3]
        for r in range(4):
            ee_quaternions[i, r] = quat[r]
        for a in range(6):
            for b in range(dof):
                jac_series[i, a, b] = jac[a, b]
        # tracking residual against the current sample
        pe = 0.0
        for r in range(3):
            diff = t_ee[r, 3] - ref_pos[i, r]
            pe += diff * diff
        _orientation_error(quat, ref_quat[i], eps)
        if axis_only[i]:
            eps[2] = 0.0
        oe = eps[0] ** 2 + eps[1] ** 2 + eps[2] ** 2
        pos_err_sq[i] = pe
        ori_err_sq[i] = oe
        err_sum += pe + oe
        if use_abort and err_sum > abort_min_sum and pe + oe > abort_err_sq:
            aborted_at = i
            fill = pe + oe
            cap = abort_err_sq * 4.0
            abort_fill = fill if fill < cap else cap
            break

        # jdot qd drift from the previous Jacobian
        jdq = np.zeros(6)
        if have_prev:
            for a in range(6):
                acc = 0.0
                for b in range(dof):
                    acc += (jac[a, b] - jac_prev[a, b]) * qd_prev[b]
                jdq[a] = acc / dt

        win0 = i + 2
        if win0 > N - 1:
            win0 = N - 1
        _rot_from_quat(ref_quat[win0], ref_rot)
        window_axis_only = axis_only[i]
        # B block: [sq_pos*dt*J_lin ; sq_ori*dt*0.5*P*R^T*J_ang]
        for b in range(dof):
            for r in range(3):
                b_block[r, b] = sq_pos * dt * jac[r, b]
            for r in range(3):
                acc = 0.0
                for c in range(3):
                    acc += ref_rot[c, r] * jac[3 + c, b]
                b_block[3 + r, b] = sq_ori * dt * 0.5 * acc
        if window_axis_only:
            for b in range(dof):
                b_block[5, b] = 0.0
        # per-node constants
        for k in range(H):
            idx = i + 2 + k
            if idx > N - 1:
                idx = N - 1
            n_node = k + 2
            drift = (n_node * (n_node - 1) / 2.0) * dt * dt
            for r in range(3):
                errs[k, r] = sq_pos * (t_ee[r, 3] + drift * jdq[r] - ref_pos[idx, r])
            _orientation_error(quat, ref_quat[idx], eps)
            for r in range(3):
                acc = 0.0
                for c in range(3):
                    acc += ref_rot[c, r] * (drift * jdq[3 + c])
                eps[r] += 0.5 * acc
            if window_axis_only:
                eps[2] = 0.0
            for r in range(3):
                errs[k, 3 + r] = sq_ori * eps[r]
        # suffix sums: command k sees rows n >= max(k-1, 0)
        for r in range(6):
            suffix[H - 1, r] = errs[H - 1, r]
        for k in range(H - 2, -1, -1):
            for r in range(6):
                suffix[k, r] = suffix[k + 1, r] + errs[k, r]
        # G = B^T B ; rhs_k = -B^T suffix[max(k-1,0)]
        for a in range(dof):
            for b in range(a, dof):
                acc = 0.0
                for r in range(6):
                    acc += b_block[r, a] * b_block[r, b]
                gmat[a, b] = acc
                gmat[b, a] = acc
        for k in range(H):
            src = k - 1
            if src < 0:
                src = 0
            for a in range(dof):
                acc = 0.0
                for r in range(6):
                    acc += b_block[r, a] * suffix[src, r]
                rhs[k, a] = -acc
        # unconstrained solve via the precomputed O = V diag(w) V^T
        rhs_t = v_o.T @ rhs  # (H, dof)
        sol_t = np.empty((H, dof))
        for k in range(H):
            block = w_o[k] * gmat
            for a in range(dof):
                block[a, a] += lam
            sol_t[k] = np.linalg.solve(block, rhs_t[k])
        u_all = (v_o @ sol_t).reshape(H * dof)
        # bounds: velocity box everywhere, position box on the first command
        for k in range(H):
            for b in range(dof):
                lb[k * dof + b] = -vmax[b]
                ub[k * dof + b] = vmax[b]
        for b in range(dof):
            lo_b = (joint_lo[b] - q[b]) / dt
            hi_b = (joint_hi[b] - q[b]) / dt
            if lo_b > lb[b]:
                lb[b] = lo_b
            if hi_b < ub[b]:
                ub[b] = hi_b
            if lb[b] > ub[b]:
                mid = 0.5 * (lb[b] + ub[b])
                lb[b] = mid
                ub[b] = mid
        violated = False
        for c in range(H * dof):
            if u_all[c] < lb[c] - 1e-12 or u_all[c] > ub[c] + 1e-12:
                violated = True
                break
        solved = True
        if violated:
            h_mat = np.empty((H * dof, H * dof))
            for k1 in range(H):
                r1 = H - (k1 - 1 if k1 >= 1 else 0)
                for k2 in range(H):
                    r2 = H - (k2 - 1 if k2 >= 1 else 0)
                    ov = r1 if r1 < r2 else r2
                    for a in range(dof):
                        for b in range(dof):
                            h_mat[k1 * dof + a, k2 * dof + b] = ov * gmat[a, b]
            for c in range(H * dof):
                h_mat[c, c] += lam
            gvec = rhs.reshape(H * dof)
            u_all, solved = _box_qp_dense(h_mat, gvec, lb, ub, 1e-8, 60)
        if not solved:
            for b in range(dof):
                u_series[i, b] = 0.0
            solver_failed[i] = True
        else:
            for b in range(dof):
                u_series[i, b] = u_all[b]
        for b in range(dof):
            q_series[i, b] = q[b]
        # integrate with position clamp
        clamped = False
        for b in range(dof):
            nxt = q[b] + u_series[i, b] * dt
            if nxt < joint_lo[b]:
                nxt = joint_lo[b]
                clamped = True
            elif nxt > joint_hi[b]:
                nxt = joint_hi[b]
                clamped = True
            q[b] = nxt
            qd_prev[b] = u_series[i, b]
        pos_clamped[i] = clamped
        for a in range(6):
            for b in range(dof):
                jac_prev[a, b] = jac[a, b]
        have_prev = True

    return (
        q_series, u_series, ee_positions, ee_quaternions,
        pos_err_sq, ori_err_sq, jac_series, solver_failed, pos_clamped,
        aborted_at, abort_fill,
    )


def rollout_arrays(chain, q0, trajectory, config, abort_err_sq=None, abort_min_sum=None):
    """Run the compiled rollout; returns the same arrays the reference builds."""
    H = config.horizon
    lower = np.tril(np.ones((H, H)), 1)
    overlap = lower.T @ lower
    w_o, v_o = np.linalg.eigh(overlap)
    use_abort = abort_err_sq is not None and abort_min_sum is not None
    return _rollout_kernel(
        np.ascontiguousarray(chain.pre),
        np.ascontiguousarray(chain.post),
        np.ascontiguousarray(chain.axes),
        chain.seg_joint_index,
        np.ascontiguousarray(chain.base),
        np.asarray(q0, dtype=float).copy(),
        np.ascontiguousarray(chain.joint_limits[:, 0]),
        np.ascontiguousarray(chain.joint_limits[:, 1]),
        np.ascontiguousarray(chain.velocity_limits),
        np.ascontiguousarray(trajectory.positions),
        np.ascontiguousarray(trajectory.quaternions),
        np.ascontiguousarray(trajectory.tool_axis_only),
        H, config.dt, config.position_gain, config.orientation_gain,
        config.regularizer_gain,
        np.ascontiguousarray(v_o), np.ascontiguousarray(w_o),
        abort_err_sq if use_abort else 0.0,
        abort_min_sum if use_abort else 0.0,
        use_abort,
    )


@njit(cache=True)
def _ik_kernel(
    pre, post, axes, jidx, base,
    q_init, joint_lo, joint_hi,
    target_pos, target_quat, ref_rot, axis_only,
    pos_tol, ori_tol, max_iters,
):
    dof = q_init.shape[0]
    q = q_init.copy()
    for b in range(dof):
        if q[b] < joint_lo[b]:
            q[b] = joint_lo[b]
        elif q[b] > joint_hi[b]:
            q[b] = joint_hi[b]
    damping = 0.05 * 0.05
    blocked = np.zeros(dof, dtype=np.bool_)
    last_norm = 1e300
    stall = 0
    origins = np.zeros((dof, 3))
    axes_w = np.zeros((dof, 3))
    jac = np.zeros((6, dof))
    quat = np.zeros(4)
    eps = np.zeros(3)
    j_task = np.zeros((6, dof))
    residual = np.zeros(6)
    for _ in range(max_iters):
        t_ee = _fk(pre, post, axes, jidx, base, q, origins, axes_w)
        pos_norm_sq = 0.0
        for r in range(3):
            d = t_ee[r, 3] - target_pos[r]
            residual[r] = d
            pos_norm_sq += d * d
        _quat_from_mat(t_ee, quat)
        _orientation_error(quat, target_quat, eps)
        if axis_only:
            eps[2] = 0.0
        for r in range(3):
            residual[3 + r] = eps[r]
        # convergence check
        if pos_norm_sq < pos_tol * pos_tol:
            if axis_only:
                dot = (
                    t_ee[0, 2] * ref_rot[0, 2]
                    + t_ee[1, 2] * ref_rot[1, 2]
                    + t_ee[2, 2] * ref_rot[2, 2]
                )
                if dot > 1.0:
                    dot = 1.0
                elif dot < -1.0:
                    dot = -1.0
                if np.arccos(dot) < ori_tol:
                    return q, True
            else:
                dot = (
                    quat[0] * target_quat[0] + quat[1] * target_quat[1]
                    + quat[2] * target_quat[2] + quat[3] * target_quat[3]
                )
                if dot < 0.0:
                    dot = -dot
                if dot > 1.0:
                    dot = 1.0
                if 2.0 * np.arccos(dot) < ori_tol:
                    return q, True
        _jacobian(t_ee[:3, 3].copy(), origins, axes_w, jac)
        for b in range(dof):
            for r in range(3):
                j_task[r, b] = jac[r, b]
            for r in range(3):
                acc = 0.0
                for c in range(3):
                    acc += ref_rot[c, r] * jac[3 + c, b]
                j_task[3 + r, b] = 0.5 * acc
        if axis_only:
            for b in range(dof):
                j_task[5, b] = 0.0
        for b in range(dof):
            if blocked[b]:
                for r in range(6):
                    j_task[r, b] = 0.0
        norm = 0.0
        for r in range(6):
            norm += residual[r] ** 2
        norm = np.sqrt(norm)
        scale = 1.0
        if norm > 0.3:
            scale = 0.3 / norm
        jjt = j_task @ j_task.T
        for r in range(6):
            jjt[r, r] += damping
        scaled = residual * scale
        lam_vec = np.linalg.solve(jjt, scaled)
        dq = -(j_task.T @ lam_vec)
        step = 0.0
        for b in range(dof):
            step += dq[b] ** 2
        step = np.sqrt(step)
        if step > 0.5:
            for b in range(dof):
                dq[b] *= 0.5 / step
        for b in range(dof):
            raw = q[b] + dq[b]
            blocked[b] = False
            if raw < joint_lo[b]:
                q[b] = joint_lo[b]
                if dq[b] < 0:
                    blocked[b] = True
            elif raw > joint_hi[b]:
                q[b] = joint_hi[b]
                if dq[b] > 0:
                    blocked[b] = True
            else:
                q[b] = raw
        if norm > last_norm - 1e-10:
            stall += 1
        else:
            stall = 0
        if norm < last_norm:
            last_norm = norm
        if stall >= 40:
            return q, False
    return q, False


def ik_arrays(chain, target_pos, target_quat, ref_rot, q_init, axis_only,
              pos_tol, ori_tol, max_iters):
    return _ik_kernel(
        np.ascontiguousarray(chain.pre),
        np.ascontiguousarray(chain.post),
        np.ascontiguousarray(chain.axes),
        chain.seg_joint_index,
        np.ascontiguousarray(chain.base),
        np.asarray(q_init, dtype=float).copy(),
        np.ascontiguousarray(chain.joint_limits[:, 0]),
        np.ascontiguousarray(chain.joint_limits[:, 1]),
        np.asarray(target_pos, dtype=float),
        np.asarray(target_quat, dtype=float),
        np.ascontiguousarray(ref_rot),
        axis_only, pos_tol, ori_tol, max_iters,
    )


@njit(cache=True)
def _box_sdf_point(px, py, pz, cx, cy, cz, hx, hy, hz, cos_y, sin_y):
    dx = px - cx
    dy = py - cy
    dz = pz - cz
    lx = cos_y * dx + sin_y * dy
    ly = -sin_y * dx + cos_y * dy
    lz = dz
    qx = abs(lx) - hx
    qy = abs(ly) - hy
    qz = abs(lz) - hz
    ox = qx if qx > 0.0 else 0.0
    oy = qy if qy > 0.0 else 0.0
    oz = qz if qz > 0.0 else 0.0
    outside = np.sqrt(ox * ox + oy * oy + oz * oz)
    m = qx
    if qy > m:
        m = qy
    if qz > m:
        m = qz
    inside = m if m < 0.0 else 0.0
    return outside + inside


@njit(cache=True)
def _segment_box_kernel(pa, pb, center, half, yaw, coarse, iters):
    K = pa.shape[0]
    out = np.empty(K)
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    cos_y = np.cos(yaw)
    sin_y = np.sin(yaw)
    cx, cy, cz = center[0], center[1], center[2]
    hx, hy, hz = half[0], half[1], half[2]
    for k in range(K):
        ax, ay, az = pa[k, 0], pa[k, 1], pa[k, 2]
        dx = pb[k, 0] - ax
        dy = pb[k, 1] - ay
        dz = pb[k, 2] - az
        best_t = 0.0
        best_v = 1e300
        for s in range(coarse):
            t = s / (coarse - 1.0)
            v = _box_sdf_point(ax + t * dx, ay + t * dy, az + t * dz,
                               cx, cy, cz, hx, hy, hz, cos_y, sin_y)
            if v < best_v:
                best_v = v
                best_t = t
        span = 1.0 / (coarse - 1.0)
        lo = best_t - span
        hi = best_t + span
        if lo < 0.0:
            lo = 0.0
        if hi > 1.0:
            hi = 1.0
        x1 = hi - golden * (hi - lo)
        x2 = lo + golden * (hi - lo)
        f1 = _box_sdf_point(ax + x1 * dx, ay + x1 * dy, az + x1 * dz,
                            cx, cy, cz, hx, hy, hz, cos_y, sin_y)
        f2 = _box_sdf_point(ax + x2 * dx, ay + x2 * dy, az + x2 * dz,
                            cx, cy, cz, hx, hy, hz, cos_y, sin_y)
        for _ in range(iters):
            if f1 < f2:
                hi = x2
                x2 = x1
                f2 = f1
                x1 = hi - golden * (hi - lo)
                f1 = _box_sdf_point(ax + x1 * dx, ay + x1 * dy, az + x1 * dz,
                                    cx, cy, cz, hx, hy, hz, cos_y, sin_y)
            else:
                lo = x1
                x1 = x2
                f1 = f2
                x2 = lo + golden * (hi - lo)
                f2 = _box_sdf_point(ax + x2 * dx, ay + x2 * dy, az + x2 * dz,
                                    cx, cy, cz, hx, hy, hz, cos_y, sin_y)
        mid = 0.5 * (lo + hi)
        v = _box_sdf_point(ax + mid * dx, ay + mid * dy, az + mid * dz,
                           cx, cy, cz, hx, hy, hz, cos_y, sin_y)
        if f1 < v:
            v = f1
        if f2 < v:
            v = f2
        out[k] = v
    return out


def segment_box_distances(pa, pb, center, half_extents, yaw, coarse=33, iters=60):
    return _segment_box_kernel(
        np.ascontiguousarray(np.atleast_2d(pa)),
        np.ascontiguousarray(np.atleast_2d(pb)),
        np.asarray(center, dtype=float),
        np.asarray(half_extents, dtype=float),
        float(yaw), coarse, iters,
    )
