"""Rigid-transform and quaternion helpers shared by the kinematics stack.

Conventions: homogeneous 4x4 transforms, scalar-first quaternions [w, x, y, z],
world frame {W} with +z up.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "rotation_about_axis",
    "rotation_z",
    "transform",
    "translation",
    "planar_pose",
    "transform_inverse",
    "quat_identity",
    "quat_multiply",
    "quat_conjugate",
    "quat_normalize",
    "quat_from_matrix",
    "matrix_from_quat",
    "quat_slerp",
    "quat_angle",
    "orientation_error",
    "skew",
]


def skew(v):
    """3x3 cross-product matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_about_axis(axis, angle):
    """Rodrigues rotation matrix about a unit 3-vector axis."""
    axis = np.asarray(axis, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    k = skew(axis)
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def transform(rotation=None, position=None):
    """Build a 4x4 homogeneous transform from a 3x3 rotation and 3-vector."""
    t = np.eye(4)
    if rotation is not None:
        t[:3, :3] = rotation
    if position is not None:
        t[:3, 3] = position
    return t


def translation(x=0.0, y=0.0, z=0.0):
    t = np.eye(4)
    t[:3, 3] = (x, y, z)
    return t


def planar_pose(x, y, theta, height=0.0):
    """Transform of a frame at (x, y, height) yawed by theta about world z."""
    return transform(rotation_z(theta), (x, y, height))


def transform_inverse(t):
    r = t[:3, :3]
    out = np.eye(4)
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ t[:3, 3]
    return out


def quat_identity():
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_multiply(a, b):
    """Hamilton product a * b, scalar-first."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q):
    return np.asarray(q, dtype=float) / np.linalg.norm(q)


def quat_from_matrix(r):
    """Quaternion of a rotation matrix (Shepperd's method, branch on trace)."""
    m = np.asarray(r)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def matrix_from_quat(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_slerp(qa, qb, u):
    """Spherical interpolation from qa (u=0) to qb (u=1), shortest arc."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb = -qb
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(qa + u * (qb - qa))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    s = np.sin(theta)
    return (np.sin((1.0 - u) * theta) * qa + np.sin(u * theta) * qb) / s


def quat_angle(qa, qb):
    """Rotation angle in radians between two unit quaternions."""
    dot = abs(float(np.dot(qa, qb)))
    return 2.0 * np.arccos(np.clip(dot, -1.0, 1.0))


def orientation_error(q_current, q_reference):
    """Vector part of q_reference^-1 * q_current (reference-frame error).

    Small-angle surrogate for the rotation taking the reference onto the
    current orientation; its z component is the spin about the reference
    tool axis.
    """
    err = quat_multiply(quat_conjugate(q_reference), q_current)
    if err[0] < 0.0:
        err = -err
    return err[1:4]
