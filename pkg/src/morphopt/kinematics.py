"""Serial-chain assembly, forward kinematics, Jacobians, manipulability.

Each module contributes a factored transform ``pre @ R(axis, q) @ post``:
straight joints spin about the outgoing flange normal (local z), elbow
joints pivot mid-module about local y, passive links translate along z,
and elbow links insert a fixed +90 deg bend about y. The tool z axis of
the final frame points along the drill bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (
    planar_pose,
    quat_from_matrix,
    rotation_about_axis,
    transform,
    translation,
)
from .library import ModuleKind, ModuleLibrary, ModuleSpec
from .morphology import MorphologyState, MountedPose

__all__ = [
    "EePose",
    "Segment",
    "KinematicChain",
    "assemble",
    "forward_kinematics",
    "jacobian",
    "manipulability",
    "export_chain_json",
    "PLATFORM_HEIGHT",
]

PLATFORM_HEIGHT = 0.5  # base link sits this far above the ground


@dataclass(frozen=True)
class EePose:
    """End-effector position and unit quaternion in the world frame."""

    position: np.ndarray
    orientation: np.ndarray


@dataclass(frozen=True)
class Segment:
    module_id: int
    kind: ModuleKind
    pre: np.ndarray
    axis: np.ndarray | None
    post: np.ndarray
    joint_index: int  # -1 for passive segments
    spec: ModuleSpec


def _segment_geometry(spec: ModuleSpec):
    L = spec.length
    if spec.kind is ModuleKind.JOINT_STRAIGHT:
        return np.eye(4), np.array([0.0, 0.0, 1.0]), translation(z=L)
    if spec.kind is ModuleKind.JOINT_ELBOW:
        return translation(z=L / 2), np.array([0.0, 1.0, 0.0]), translation(z=L / 2)
    if spec.kind is ModuleKind.LINK_STRAIGHT or spec.kind is ModuleKind.END_EFFECTOR:
        return np.eye(4), None, translation(z=L)
    if spec.kind is ModuleKind.LINK_ELBOW:
        bend = transform(rotation_about_axis((0.0, 1.0, 0.0), np.pi / 2)) @ translation(z=L / 2)
        return translation(z=L / 2), None, bend
    raise ValueError(f"unhandled module kind {spec.kind}")


@dataclass(frozen=True)
class KinematicChain:
    """Assembled serial chain rooted at the mounted pose.

    Immutable after assembly; FK and Jacobian queries are pure. The packed
    arrays mirror the segment list for vectorized hot paths.
    """

    base: np.ndarray
    segments: tuple
    pose: MountedPose
    # packed per-segment arrays
    pre: np.ndarray = field(repr=False, default=None)
    post: np.ndarray = field(repr=False, default=None)
    axes: np.ndarray = field(repr=False, default=None)
    is_joint: np.ndarray = field(repr=False, default=None)
    joint_segment: np.ndarray = field(repr=False, default=None)
    masses: np.ndarray = field(repr=False, default=None)
    com_offsets: np.ndarray = field(repr=False, default=None)
    inertias: np.ndarray = field(repr=False, default=None)
    capsule_radii: np.ndarray = field(repr=False, default=None)
    joint_limits: np.ndarray = field(repr=False, default=None)
    velocity_limits: np.ndarray = field(repr=False, default=None)
    torque_limits: np.ndarray = field(repr=False, default=None)
    seg_joint_index: np.ndarray = field(repr=False, default=None)

    @property
    def dof(self) -> int:
        return len(self.joint_segment)

    @property
    def num_modules(self) -> int:
        return len(self.segments)

    @property
    def module_ids(self) -> tuple:
        return tuple(seg.module_id for seg in self.segments)

    def total_length(self) -> float:
        return float(sum(seg.spec.length for seg in self.segments))


def assemble(
    library: ModuleLibrary,
    morphology: MorphologyState,
    pose: MountedPose,
    platform_height: float = PLATFORM_HEIGHT,
) -> KinematicChain:
    """Compose segment frames in sequence order from the mounted pose.

    A zero-module morphology yields a dof-0 chain holding only the
    end-effector; downstream evaluation flags it instead of erroring here.
    """
    segments = []
    joint_index = 0
    for module_id in morphology.sequence:
        spec = library.spec(module_id)
        pre, axis, post = _segment_geometry(spec)
        segments.append(
            Segment(
                module_id=module_id,
                kind=spec.kind,
                pre=pre,
                axis=axis,
                post=post,
                joint_index=joint_index if axis is not None else -1,
                spec=spec,
            )
        )
        if axis is not None:
            joint_index += 1

    n = len(segments)
    joint_segment = np.array([i for i, s in enumerate(segments) if s.axis is not None], dtype=int)
    axes = np.zeros((n, 3))
    for i, seg in enumerate(segments):
        if seg.axis is not None:
            axes[i] = seg.axis
    joints = [segments[i].spec for i in joint_segment]
    return KinematicChain(
        base=planar_pose(pose.x, pose.y, pose.theta, height=platform_height),
        segments=tuple(segments),
        pose=pose,
        pre=np.stack([s.pre for s in segments]) if n else np.zeros((0, 4, 4)),
        post=np.stack([s.post for s in segments]) if n else np.zeros((0, 4, 4)),
        axes=axes,
        is_joint=np.array([s.axis is not None for s in segments]),
        joint_segment=joint_segment,
        masses=np.array([s.spec.mass for s in segments]),
        com_offsets=np.array([s.spec.com_offset for s in segments]),
        inertias=np.array([s.spec.inertia for s in segments]),
        capsule_radii=np.array([s.spec.capsule_radius for s in segments]),
        joint_limits=np.array([s.joint_position_limits for s in joints]).reshape(-1, 2),
        velocity_limits=np.array([s.joint_velocity_limit for s in joints], dtype=float),
        torque_limits=np.array([s.torque_limit for s in joints], dtype=float),
        seg_joint_index=np.array([s.joint_index for s in segments], dtype=np.int64),
    )


@dataclass(frozen=True)
class ChainState:
    """World-frame frames of every module at one configuration."""

    ee: EePose
    ee_transform: np.ndarray
    frames_out: np.ndarray  # (n, 4, 4) output frame of each module
    frames_mid: np.ndarray  # (n, 4, 4) body frame (after the joint rotation)
    joint_origins: np.ndarray  # (dof, 3)
    joint_axes: np.ndarray  # (dof, 3) world-frame rotation axes


def chain_state(chain: KinematicChain, q) -> ChainState:
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise ValueError(f"expected {chain.dof} joint values, got shape {q.shape}")
    n = chain.num_modules
    frames_out = np.empty((n, 4, 4))
    frames_mid = np.empty((n, 4, 4))
    joint_origins = np.empty((chain.dof, 3))
    joint_axes = np.empty((chain.dof, 3))
    t = chain.base
    for i, seg in enumerate(chain.segments):
        t = t @ seg.pre
        if seg.joint_index >= 0:
            t = t @ transform(rotation_about_axis(seg.axis, q[seg.joint_index]))
            joint_origins[seg.joint_index] = t[:3, 3]
            joint_axes[seg.joint_index] = t[:3, :3] @ seg.axis
        frames_mid[i] = t
        t = t @ seg.post
        frames_out[i] = t
    ee_t = frames_out[-1] if n else chain.base
    ee = EePose(position=ee_t[:3, 3].copy(), orientation=quat_from_matrix(ee_t[:3, :3]))
    return ChainState(
        ee=ee,
        ee_transform=ee_t,
        frames_out=frames_out,
        frames_mid=frames_mid,
        joint_origins=joint_origins,
        joint_axes=joint_axes,
    )


def forward_kinematics(chain: KinematicChain, q):
    """End-effector pose plus per-module output frames, all in {W}."""
    state = chain_state(chain, q)
    return state.ee, list(state.frames_out)


def jacobian(chain: KinematicChain, q, state: ChainState | None = None) -> np.ndarray:
    """Geometric Jacobian mapping joint rates to EE [linear; angular] velocity."""
    if chain.dof == 0:
        raise ValueError("jacobian undefined for a chain without joints")
    if state is None:
        state = chain_state(chain, q)
    lever = state.ee.position[None, :] - state.joint_origins
    jac = np.empty((6, chain.dof))
    jac[:3] = np.cross(state.joint_axes, lever).T
    jac[3:] = state.joint_axes.T
    return jac


def manipulability(jac) -> float:
    """det(J J^T); exactly zero whenever fewer than six columns exist."""
    jac = np.asarray(jac, dtype=float)
    if jac.shape[1] < jac.shape[0]:
        return 0.0
    return float(np.linalg.det(jac @ jac.T))


def fk_batch(chain: KinematicChain, q_series) -> dict:
    """Vectorized FK over an (N, dof) configuration series.

    Returns world-frame segment data stacked along the leading axis:
    input/output origins for capsules, body frames for dynamics, and the
    EE transform per sample.
    """
    q_series = np.atleast_2d(np.asarray(q_series, dtype=float))
    N = q_series.shape[0]
    n = chain.num_modules
    p_in = np.empty((N, n, 3))
    frames_mid_r = np.empty((N, n, 3, 3))
    frames_mid_p = np.empty((N, n, 3))
    p_out = np.empty((N, n, 3))
    t = np.broadcast_to(chain.base, (N, 4, 4)).copy()
    for i, seg in enumerate(chain.segments):
        p_in[:, i] = t[:, :3, 3]
        t = t @ seg.pre
        if seg.joint_index >= 0:
            qs = q_series[:, seg.joint_index]
            rot = _batch_axis_rotation(seg.axis, qs)
            t = np.einsum("nij,njk->nik", t, rot)
        frames_mid_r[:, i] = t[:, :3, :3]
        frames_mid_p[:, i] = t[:, :3, 3]
        t = t @ seg.post
        p_out[:, i] = t[:, :3, 3]
    return {
        "p_in": p_in,
        "p_out": p_out,
        "mid_rotations": frames_mid_r,
        "mid_positions": frames_mid_p,
        "ee_transform": t,
    }


def _batch_axis_rotation(axis, angles):
    k = np.zeros((3, 3))
    k[0, 1], k[0, 2] = -axis[2], axis[1]
    k[1, 0], k[1, 2] = axis[2], -axis[0]
    k[2, 0], k[2, 1] = -axis[1], axis[0]
    c = np.cos(angles)[:, None, None]
    s = np.sin(angles)[:, None, None]
    rot3 = np.eye(3) + s * k + (1.0 - c) * (k @ k)
    out = np.zeros((angles.size, 4, 4))
    out[:, :3, :3] = rot3
    out[:, 3, 3] = 1.0
    return out


def export_chain_json(chain: KinematicChain, path=None) -> str:
    """Dump per-segment transforms, axes, and ids for external visualization."""
    doc = {
        "base_transform": chain.base.tolist(),
        "pose": [chain.pose.x, chain.pose.y, chain.pose.theta],
        "dof": chain.dof,
        "segments": [
            {
                "module_id": seg.module_id,
                "kind": seg.kind.value,
                "pre": seg.pre.tolist(),
                "axis": None if seg.axis is None else seg.axis.tolist(),
                "post": seg.post.tolist(),
                "joint_index": seg.joint_index,
            }
            for seg in chain.segments
        ],
    }
    text = json.dumps(doc, indent=2)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
