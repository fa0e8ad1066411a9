"""Continuous relaxation of the discrete assembly space.

A morphology is an ordered id sequence terminated by the end-effector id
m+1 (the assembly stop marker). ``decode`` maps a continuous module-state
vector onto that discrete space by descending-order sorting, so rank order
is all that matters; ties are broken by a seeded shuffle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MorphologyState",
    "MountedPose",
    "Workcell",
    "DesignGenome",
    "decode",
    "effective_equal",
    "random_genome",
    "truncate_at_end_effector",
]


@dataclass(frozen=True)
class MorphologyState:
    """Assembly sequence of module ids, last element is the end-effector."""

    sequence: tuple

    def __post_init__(self):
        object.__setattr__(self, "sequence", tuple(int(v) for v in self.sequence))
        seq = self.sequence
        if not seq:
            raise ValueError("morphology sequence cannot be empty")
        if len(set(seq)) != len(seq):
            raise ValueError(f"morphology sequence repeats ids: {seq}")
        eom = max(seq)
        if seq[-1] != eom:
            raise ValueError(f"sequence must terminate at the end-effector id, got {seq}")

    @property
    def body_ids(self) -> tuple:
        """Module ids actually assembled, i.e. everything before the stop id."""
        return self.sequence[:-1]

    def to_json(self) -> str:
        return json.dumps(list(self.sequence))


@dataclass(frozen=True)
class MountedPose:
    """Planar base placement in the world frame: position (m) and yaw (rad)."""

    x: float
    y: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class Workcell:
    """Axis-aligned admissible region for the mounted pose."""

    x_range: tuple = (-0.6, 0.6)
    y_range: tuple = (-0.3, 0.3)
    theta_range: tuple = (-np.pi, np.pi)

    def contains(self, pose: MountedPose) -> bool:
        return (
            self.x_range[0] <= pose.x <= self.x_range[1]
            and self.y_range[0] <= pose.y <= self.y_range[1]
            and self.theta_range[0] <= pose.theta <= self.theta_range[1]
        )


@dataclass(frozen=True)
class DesignGenome:
    """Optimization variables: module states in [0,1]^(m+1) plus mounted pose."""

    module_states: np.ndarray
    pose: MountedPose

    def __post_init__(self):
        states = np.asarray(self.module_states, dtype=float)
        object.__setattr__(self, "module_states", states)

    @property
    def dimension(self) -> int:
        return self.module_states.size + 3

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.module_states, self.pose.as_array()])

    @staticmethod
    def from_vector(vec) -> "DesignGenome":
        vec = np.asarray(vec, dtype=float)
        return DesignGenome(
            module_states=vec[:-3], pose=MountedPose(float(vec[-3]), float(vec[-2]), float(vec[-1]))
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "module_states": [float(v) for v in self.module_states],
                "pose": [self.pose.x, self.pose.y, self.pose.theta],
            }
        )

    @staticmethod
    def from_json(text: str) -> "DesignGenome":
        data = json.loads(text)
        pose = data["pose"]
        if len(pose) != 3:
            raise ValueError("genome pose must be [x, y, theta]")
        return DesignGenome(
            module_states=np.asarray(data["module_states"], dtype=float),
            pose=MountedPose(float(pose[0]), float(pose[1]), float(pose[2])),
        )


def truncate_at_end_effector(ids, end_effector_id: int):
    """Drop everything after the first occurrence of the stop id."""
    ids = list(int(v) for v in ids)
    cut = ids.index(end_effector_id)
    return tuple(ids[: cut + 1])


def decode(states, rng_seed: int, end_effector_id: int | None = None) -> MorphologyState:
    """Map a module-state vector onto a morphology.

    Ids are ordered by descending state value and the sequence is truncated
    right after the end-effector id. Entry i holds the state of module id
    i+1; by default the last entry is the end-effector. Tied values are
    ordered by a seeded shuffle so each tied module is equally likely to
    come first; the result is deterministic for a fixed seed.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim != 1:
        raise ValueError(f"module-state vector must be 1-D, got shape {states.shape}")
    n = states.size
    if end_effector_id is None:
        end_effector_id = n
    if not 1 <= end_effector_id <= n:
        raise ValueError(f"end-effector id {end_effector_id} outside 1..{n}")
    rng = np.random.default_rng(rng_seed)
    tiebreak = rng.random(n)
    # lexsort: primary key descending state, secondary key the random draw
    order = np.lexsort((tiebreak, -states))
    ids = order + 1
    return MorphologyState(sequence=truncate_at_end_effector(ids, end_effector_id))


def effective_equal(a, b) -> bool:
    """True iff two id sequences are identical once truncated at the stop id.

    Accepts raw (possibly untruncated) sequences as well as MorphologyState.
    """
    seq_a = a.sequence if isinstance(a, MorphologyState) else tuple(int(v) for v in a)
    seq_b = b.sequence if isinstance(b, MorphologyState) else tuple(int(v) for v in b)
    eom = max(max(seq_a), max(seq_b))
    if eom not in seq_a or eom not in seq_b:
        return False
    return truncate_at_end_effector(seq_a, eom) == truncate_at_end_effector(seq_b, eom)


def random_genome(num_states: int, workcell: Workcell, rng_seed: int) -> DesignGenome:
    """Uniform genome: states in [0,1]^num_states, pose inside the workcell."""
    rng = np.random.default_rng(rng_seed)
    states = rng.random(num_states)
    pose = MountedPose(
        x=float(rng.uniform(*workcell.x_range)),
        y=float(rng.uniform(*workcell.y_range)),
        theta=float(rng.uniform(*workcell.theta_range)),
    )
    return DesignGenome(module_states=states, pose=pose)
