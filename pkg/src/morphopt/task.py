"""Cartesian reference trajectories for drilling and waypoint tasks.

A task is a time-stamped sequence of end-effector pose targets with
segment tags (transfer / drill-in / drill-out). The drilling builder
visits holes on a vertical wall in order: approach from a standoff,
drill in along the wall normal, back out, retreat, move laterally to the
next hole. The tool z axis stays perpendicular to the wall and spin about
it is left free (tool-axis-only orientation mode).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import quat_conjugate, quat_from_matrix, quat_multiply, quat_slerp
from .kinematics import EePose

__all__ = [
    "TRANSFER",
    "DRILL_IN",
    "DRILL_OUT",
    "Waypoint",
    "ReferenceTrajectory",
    "drilling_task",
    "build_drilling_waypoints",
    "resample",
    "default_drilling_task",
    "DEFAULT_HOLES",
    "load_task",
    "save_task",
    "export_trajectory_csv",
]

TRANSFER = "transfer"
DRILL_IN = "drill-in"
DRILL_OUT = "drill-out"

# six drilling points on the wall plane x = -1.5, alternating along y,
# descending in z from 0.45 by 0.15
DEFAULT_HOLES = (
    (-1.5, 0.15, 0.45),
    (-1.5, -0.15, 0.45),
    (-1.5, -0.15, 0.30),
    (-1.5, 0.15, 0.30),
    (-1.5, 0.15, 0.15),
    (-1.5, -0.15, 0.15),
)


@dataclass(frozen=True)
class Waypoint:
    pose: EePose
    time: float
    segment: str = TRANSFER
    orientation_mode: str = "tool-axis-only"

    def __post_init__(self):
        if self.segment not in (TRANSFER, DRILL_IN, DRILL_OUT):
            raise ValueError(f"unknown segment tag {self.segment!r}")
        if self.orientation_mode not in ("full", "tool-axis-only"):
            raise ValueError(f"unknown orientation mode {self.orientation_mode!r}")


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Waypoints resampled onto the controller grid.

    Immutable after construction; shared read-only across evaluations.
    """

    times: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    linear_velocities: np.ndarray
    angular_velocities: np.ndarray
    segments: tuple
    tool_axis_only: np.ndarray
    dt: float
    waypoints: tuple

    @property
    def N(self) -> int:
        return self.times.shape[0]

    @property
    def duration(self) -> float:
        return float(self.times[-1])


def _wall_orientation(tool_z):
    """Right-handed frame whose z axis is the drill direction."""
    z = np.asarray(tool_z, dtype=float)
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(up, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return quat_from_matrix(np.column_stack([x, y, z]))


def build_drilling_waypoints(
    holes=DEFAULT_HOLES,
    depth: float = 0.1,
    standoff: float = 0.05,
    transfer_speed: float = 0.10,
    drill_speed: float = 0.02,
    wall_normal=(1.0, 0.0, 0.0),
    time_grid: float | None = None,
) -> list:
    """Waypoint list visiting the holes in order.

    ``wall_normal`` points from the wall toward the robot; drilling
    advances ``depth`` meters against it. Segment durations are distance
    over speed, optionally snapped up to multiples of ``time_grid``.
    """
    if depth <= 0.0:
        raise ValueError("drilling depth must be positive")
    if standoff <= 0.0 or transfer_speed <= 0.0 or drill_speed <= 0.0:
        raise ValueError("standoff and speeds must be positive")
    holes = [np.asarray(h, dtype=float) for h in holes]
    if not holes:
        raise ValueError("need at least one hole")
    normal = np.asarray(wall_normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    plane_coords = [float(h @ normal) for h in holes]
    if max(plane_coords) - min(plane_coords) > 1e-9:
        raise ValueError("holes must lie on a single wall plane")
    quat = _wall_orientation(-normal)

    points = []  # (position, segment tag, speed)
    for hole in holes:
        entry = hole
        bottom = hole - depth * normal
        out = hole + standoff * normal
        points.append((out, TRANSFER, transfer_speed))  # lateral arrival at the standoff
        # approach onto the hole and withdrawal are part of the drilling
        # process: the bit contacts the wall surface, so wall collision
        # filtering must already apply
        points.append((entry, DRILL_IN, transfer_speed))
        points.append((bottom, DRILL_IN, drill_speed))
        points.append((entry, DRILL_OUT, drill_speed))
        points.append((out, DRILL_OUT, transfer_speed))

    waypoints = []
    t = 0.0
    prev = None
    for pos, tag, speed in points:
        if prev is not None:
            dist = float(np.linalg.norm(pos - prev))
            if dist <= 1e-12:
                continue
            duration = dist / speed
            if time_grid is not None:
                duration = np.ceil(duration / time_grid - 1e-9) * time_grid
            t += duration
        waypoints.append(
            Waypoint(pose=EePose(position=pos, orientation=quat), time=t, segment=tag)
        )
        prev = pos
    return waypoints


def resample(waypoints, dt: float) -> ReferenceTrajectory:
    """Interpolate waypoints onto a uniform dt grid.

    Positions interpolate linearly, orientations by slerp; per-sample
    reference velocities come from differencing. Waypoint times must be
    strictly increasing and span a whole number of steps.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    times = np.array([w.time for w in waypoints], dtype=float)
    if times.size < 2:
        raise ValueError("need at least two waypoints")
    if not (np.diff(times) > 0.0).all():
        raise ValueError("waypoint times must be strictly increasing")
    total = times[-1] - times[0]
    n_steps = round(total / dt)
    if abs(total - n_steps * dt) > 1e-6:
        raise ValueError(f"trajectory duration {total} is not a multiple of dt={dt}")
    N = n_steps + 1
    ts = times[0] + np.arange(N) * dt
    positions = np.empty((N, 3))
    quats = np.empty((N, 4))
    segments = []
    axis_only = np.empty(N, dtype=bool)
    pos_w = np.stack([w.pose.position for w in waypoints])
    quat_w = np.stack([w.pose.orientation for w in waypoints])
    idx = np.minimum(np.searchsorted(times, ts + 1e-12) - 1, times.size - 2)
    idx = np.maximum(idx, 0)
    for i in range(N):
        k = idx[i]
        u = (ts[i] - times[k]) / (times[k + 1] - times[k])
        positions[i] = pos_w[k] + u * (pos_w[k + 1] - pos_w[k])
        quats[i] = quat_slerp(quat_w[k], quat_w[k + 1], u)
        dest = waypoints[k + 1]  # a sample carries the tag of the segment it moves along
        segments.append(dest.segment)
        axis_only[i] = dest.orientation_mode == "tool-axis-only"
    lin_vel = np.zeros((N, 3))
    lin_vel[:-1] = (positions[1:] - positions[:-1]) / dt
    lin_vel[-1] = lin_vel[-2] if N > 1 else 0.0
    ang_vel = np.zeros((N, 3))
    for i in range(N - 1):
        rel = quat_multiply(quats[i + 1], quat_conjugate(quats[i]))
        ang_vel[i] = 2.0 * rel[1:4] / dt
    ang_vel[-1] = ang_vel[-2] if N > 1 else 0.0
    return ReferenceTrajectory(
        times=ts - times[0],
        positions=positions,
        quaternions=quats,
        linear_velocities=lin_vel,
        angular_velocities=ang_vel,
        segments=tuple(segments),
        tool_axis_only=axis_only,
        dt=dt,
        waypoints=tuple(waypoints),
    )


def drilling_task(
    holes=DEFAULT_HOLES,
    depth: float = 0.1,
    dt: float = 0.01,
    standoff: float = 0.05,
    transfer_speed: float = 0.10,
    drill_speed: float = 0.02,
    wall_normal=(1.0, 0.0, 0.0),
) -> ReferenceTrajectory:
    """Resampled reference for drilling the given holes in order."""
    waypoints = build_drilling_waypoints(
        holes=holes,
        depth=depth,
        standoff=standoff,
        transfer_speed=transfer_speed,
        drill_speed=drill_speed,
        wall_normal=wall_normal,
        time_grid=dt,
    )
    return resample(waypoints, dt)


def default_drilling_task(dt: float = 0.01) -> ReferenceTrajectory:
    return drilling_task(dt=dt)


def save_task(path, holes=DEFAULT_HOLES, depth=0.1, standoff=0.05, transfer_speed=0.10,
              drill_speed=0.02, wall_normal=(1.0, 0.0, 0.0)) -> None:
    doc = {
        "holes": [list(h) for h in holes],
        "depth": depth,
        "standoff": standoff,
        "transfer_speed": transfer_speed,
        "drill_speed": drill_speed,
        "wall_normal": list(wall_normal),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_task(path, dt: float = 0.01) -> ReferenceTrajectory:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON: {exc}") from exc
    try:
        return drilling_task(
            holes=[tuple(h) for h in doc["holes"]],
            depth=float(doc["depth"]),
            dt=dt,
            standoff=float(doc.get("standoff", 0.05)),
            transfer_speed=float(doc.get("transfer_speed", 0.10)),
            drill_speed=float(doc.get("drill_speed", 0.02)),
            wall_normal=tuple(doc.get("wall_normal", (1.0, 0.0, 0.0))),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed task file: {exc}") from exc


def export_trajectory_csv(trajectory: ReferenceTrajectory, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "z", "qw", "qx", "qy", "qz", "segment"])
        for i in range(trajectory.N):
            writer.writerow(
                [f"{trajectory.times[i]:.6f}"]
                + [f"{v:.9g}" for v in trajectory.positions[i]]
                + [f"{v:.9g}" for v in trajectory.quaternions[i]]
                + [trajectory.segments[i]]
            )
