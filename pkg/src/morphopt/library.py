"""Catalog of interchangeable modules and their physical parameters.

A library holds m body modules plus one end-effector whose id is m+1.
Libraries are immutable after load and safe to share across parallel
evaluations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "ModuleKind",
    "ModuleSpec",
    "ModuleLibrary",
    "load_library",
    "save_library",
    "default_library",
]


class ModuleKind(str, Enum):
    JOINT_STRAIGHT = "joint-straight"
    JOINT_ELBOW = "joint-elbow"
    LINK_STRAIGHT = "link-straight"
    LINK_ELBOW = "link-elbow"
    END_EFFECTOR = "end-effector"

    @property
    def is_joint(self) -> bool:
        return self in (ModuleKind.JOINT_STRAIGHT, ModuleKind.JOINT_ELBOW)


@dataclass(frozen=True)
class ModuleSpec:
    """Geometric, inertial, and limit parameters of one module.

    Lengths in meters, masses in kilograms, torques in newton-meters,
    angles in radians. ``com_offset`` and ``inertia`` are expressed in the
    module body frame (origin at the joint pivot for joint modules).
    """

    id: int
    kind: ModuleKind
    length: float
    mass: float
    com_offset: tuple = (0.0, 0.0, 0.0)
    inertia: tuple = ((0.0,) * 3,) * 3
    capsule_radius: float = 0.05
    torque_limit: float | None = None
    joint_position_limits: tuple | None = None
    joint_velocity_limit: float | None = None

    @property
    def is_joint(self) -> bool:
        return self.kind.is_joint

    def validate(self) -> None:
        if self.length <= 0.0:
            raise ValueError(f"module {self.id}: length must be positive, got {self.length}")
        if self.mass < 0.0:
            raise ValueError(f"module {self.id}: mass must be non-negative, got {self.mass}")
        if self.capsule_radius <= 0.0:
            raise ValueError(f"module {self.id}: capsule_radius must be positive")
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.shape != (3, 3):
            raise ValueError(f"module {self.id}: inertia must be a 3x3 tensor")
        if len(self.com_offset) != 3:
            raise ValueError(f"module {self.id}: com_offset must be a 3-vector")
        if self.is_joint:
            if self.torque_limit is None or self.torque_limit <= 0.0:
                raise ValueError(f"module {self.id}: joint modules need a positive torque_limit")
            if self.joint_position_limits is None or len(self.joint_position_limits) != 2:
                raise ValueError(f"module {self.id}: joint modules need [lower, upper] limits")
            lo, hi = self.joint_position_limits
            if not lo < hi:
                raise ValueError(f"module {self.id}: joint limits must satisfy lower < upper")
            if self.joint_velocity_limit is None or self.joint_velocity_limit <= 0.0:
                raise ValueError(f"module {self.id}: joint modules need a velocity limit")


@dataclass(frozen=True)
class ModuleLibrary:
    """Ordered collection of m body modules plus the end-effector (id m+1)."""

    modules: tuple

    def __post_init__(self):
        object.__setattr__(self, "modules", tuple(self.modules))
        self.validate()

    @property
    def m(self) -> int:
        """Number of body modules (excludes the end-effector)."""
        return len(self.modules) - 1

    @property
    def end_effector_id(self) -> int:
        return self.m + 1

    def spec(self, module_id: int) -> ModuleSpec:
        spec = self._by_id.get(module_id)
        if spec is None:
            raise KeyError(f"unknown module id {module_id}")
        return spec

    @property
    def _by_id(self) -> dict:
        return {spec.id: spec for spec in self.modules}

    def validate(self) -> None:
        ids = [spec.id for spec in self.modules]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate module ids: {dupes}")
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ValueError(f"module ids must cover 1..{len(ids)}, got {sorted(ids)}")
        ees = [spec for spec in self.modules if spec.kind is ModuleKind.END_EFFECTOR]
        if len(ees) != 1:
            raise ValueError(f"library must contain exactly one end-effector, found {len(ees)}")
        if ees[0].id != len(ids):
            raise ValueError(
                f"end-effector id must be m+1 = {len(ids)}, got {ees[0].id}"
            )
        if not any(spec.is_joint for spec in self.modules):
            raise ValueError("library must contain at least one joint module")
        for spec in self.modules:
            spec.validate()


def _spec_to_record(spec: ModuleSpec) -> dict:
    rec = {
        "id": spec.id,
        "kind": spec.kind.value,
        "length": spec.length,
        "mass": spec.mass,
        "com_offset": list(spec.com_offset),
        "inertia": [list(row) for row in spec.inertia],
        "capsule_radius": spec.capsule_radius,
    }
    if spec.is_joint:
        rec["torque_limit"] = spec.torque_limit
        rec["joint_position_limits"] = list(spec.joint_position_limits)
        rec["joint_velocity_limit"] = spec.joint_velocity_limit
    return rec


def _spec_from_record(rec: dict) -> ModuleSpec:
    try:
        kind = ModuleKind(rec["kind"])
        limits = rec.get("joint_position_limits")
        return ModuleSpec(
            id=int(rec["id"]),
            kind=kind,
            length=float(rec["length"]),
            mass=float(rec["mass"]),
            com_offset=tuple(float(v) for v in rec.get("com_offset", (0.0, 0.0, 0.0))),
            inertia=tuple(tuple(float(v) for v in row) for row in rec.get("inertia", np.zeros((3, 3)))),
            capsule_radius=float(rec.get("capsule_radius", 0.05)),
            torque_limit=None if rec.get("torque_limit") is None else float(rec["torque_limit"]),
            joint_position_limits=None if limits is None else tuple(float(v) for v in limits),
            joint_velocity_limit=(
                None
                if rec.get("joint_velocity_limit") is None
                else float(rec["joint_velocity_limit"])
            ),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed module record: {rec!r}") from exc


def load_library(path) -> ModuleLibrary:
    """Load and validate a module library from a JSON file.

    The file holds a top-level array of module records keyed by the
    ModuleSpec field names.
    """
    text = Path(path).read_text()
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(records, list):
        raise ValueError(f"{path}: library file must hold a top-level array")
    specs = [_spec_from_record(rec) for rec in records]
    specs.sort(key=lambda s: s.id)
    return ModuleLibrary(modules=tuple(specs))


def save_library(library: ModuleLibrary, path) -> None:
    records = [_spec_to_record(spec) for spec in library.modules]
    Path(path).write_text(json.dumps(records, indent=2) + "\n")


def _cylinder_inertia(mass, radius, height):
    ixx = mass * (3.0 * radius**2 + height**2) / 12.0
    izz = 0.5 * mass * radius**2
    return ((ixx, 0.0, 0.0), (0.0, ixx, 0.0), (0.0, 0.0, izz))


def default_library() -> ModuleLibrary:
    """The built-in 10-module catalog plus drilling end-effector.

    Six actuated joints (ids 1-6; odd straight, even elbow), straight
    passive links of 0.3/0.4/0.6 m (ids 7-9), one elbow link (id 10), and a
    10 kg end-effector (id 11). Torque limits are 120 Nm for ids 1, 2, 4, 5
    and 200 Nm for ids 3 and 6; joint travel is [-2.7, 2.7] rad at up to
    2.0 rad/s. Masses, inertias, and joint-module lengths are editable
    defaults (joints: 0.25 m, 3.5 kg cylinders; links: 1.0 kg per 0.3 m
    rods) — regenerate the data file after changing them.
    """
    joint_len, joint_mass, joint_radius = 0.25, 3.5, 0.075
    link_radius = 0.05
    specs = []
    for mid in range(1, 7):
        straight = mid % 2 == 1
        # straight joints spin about the module axis: pivot at the input
        # flange; elbow joints pivot mid-module about local y
        com = (0.0, 0.0, joint_len / 2.0) if straight else (0.0, 0.0, 0.0)
        specs.append(
            ModuleSpec(
                id=mid,
                kind=ModuleKind.JOINT_STRAIGHT if straight else ModuleKind.JOINT_ELBOW,
                length=joint_len,
                mass=joint_mass,
                com_offset=com,
                inertia=_cylinder_inertia(joint_mass, joint_radius, joint_len),
                capsule_radius=joint_radius,
                torque_limit=200.0 if mid in (3, 6) else 120.0,
                joint_position_limits=(-2.7, 2.7),
                joint_velocity_limit=2.0,
            )
        )
    for mid, length in zip((7, 8, 9), (0.3, 0.4, 0.6)):
        mass = length / 0.3  # 1.0 kg per 0.3 m
        specs.append(
            ModuleSpec(
                id=mid,
                kind=ModuleKind.LINK_STRAIGHT,
                length=length,
                mass=mass,
                com_offset=(0.0, 0.0, length / 2.0),
                inertia=_cylinder_inertia(mass, link_radius, length),
                capsule_radius=link_radius,
            )
        )
    specs.append(
        ModuleSpec(
            id=10,
            kind=ModuleKind.LINK_ELBOW,
            length=0.3,
            mass=1.0,
            com_offset=(0.0, 0.0, 0.0),
            inertia=_cylinder_inertia(1.0, link_radius, 0.3),
            capsule_radius=link_radius,
        )
    )
    # drill end-effector: slim capsule so the 0.05 m wall standoff clears
    # d_safe during lateral transfers
    specs.append(
        ModuleSpec(
            id=11,
            kind=ModuleKind.END_EFFECTOR,
            length=0.25,
            mass=10.0,
            com_offset=(0.0, 0.0, 0.125),
            inertia=_cylinder_inertia(10.0, 0.08, 0.25),
            capsule_radius=0.025,
        )
    )
    return ModuleLibrary(modules=tuple(specs))
