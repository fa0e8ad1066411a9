"""Capsule approximation of the manipulator and clearance constraints.

Every module is a capsule spanning its input and output flange origins.
Distances are signed: negative means penetration. The capsule-box query
minimizes the (convex) signed point-box distance along the segment by
golden-section iteration; capsule-capsule and capsule-plane are exact.

Two scene rules from the drilling setting: obstacles marked transfer-only
(the walls) are skipped while a drill segment executes, and the chain's
first module is exempt from base-attached obstacles (it is bolted to the
platform it would otherwise always touch).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .kinematics import KinematicChain, fk_batch
from .morphology import MountedPose

if os.environ.get("MORPHOPT_NO_JIT"):
    _fastpath = None
else:
    try:
        from . import _fastpath
    except ImportError:
        _fastpath = None

__all__ = [
    "Capsule",
    "Obstacle",
    "Environment",
    "module_capsules",
    "capsule_obstacle_distance",
    "segment_segment_distance",
    "clearance",
    "default_environment",
    "load_environment",
    "save_environment",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_COARSE_SAMPLES = 33
_REFINE_ITERS = 60


@dataclass(frozen=True)
class Capsule:
    """Sphere-swept segment between two world-frame endpoints."""

    endpoint_a: np.ndarray
    endpoint_b: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "endpoint_a", np.asarray(self.endpoint_a, dtype=float))
        object.__setattr__(self, "endpoint_b", np.asarray(self.endpoint_b, dtype=float))
        if self.radius <= 0.0:
            raise ValueError("capsule radius must be positive")


@dataclass(frozen=True)
class Obstacle:
    """Box (center, half-extents, yaw), capsule, or half-space plane.

    ``active_during`` is ``"all"`` or ``"transfer-only"``; base-attached
    obstacles are expressed relative to the mounted pose footprint and
    resolved into {W} per evaluation. A plane obstacle occupies the
    half-space normal . p <= offset.
    """

    shape: str
    active_during: str = "all"
    attached_to_base: bool = False
    center: tuple = (0.0, 0.0, 0.0)
    half_extents: tuple = (0.0, 0.0, 0.0)
    yaw: float = 0.0
    endpoint_a: tuple = (0.0, 0.0, 0.0)
    endpoint_b: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.0
    normal: tuple = (0.0, 0.0, 1.0)
    offset: float = 0.0

    def __post_init__(self):
        if self.shape not in ("box", "capsule", "plane"):
            raise ValueError(f"unknown obstacle shape {self.shape!r}")
        if self.active_during not in ("all", "transfer-only"):
            raise ValueError(f"unknown activity filter {self.active_during!r}")
        for name in ("center", "half_extents", "endpoint_a", "endpoint_b", "normal"):
            value = np.asarray(getattr(self, name), dtype=float)
            if not np.isfinite(value).all():
                raise ValueError(f"obstacle {name} must be finite")
        if self.shape == "plane":
            norm = np.linalg.norm(np.asarray(self.normal, dtype=float))
            if not np.isclose(norm, 1.0, atol=1e-9):
                raise ValueError("plane normal must be a unit vector")


@dataclass(frozen=True)
class Environment:
    obstacles: tuple
    d_safe: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.d_safe < 0.0:
            raise ValueError("d_safe must be non-negative")

    def resolve(self, pose: MountedPose) -> "Environment":
        """Fix base-attached obstacles into {W} for the given mounted pose."""
        out = []
        c, s = np.cos(pose.theta), np.sin(pose.theta)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        shift = np.array([pose.x, pose.y, 0.0])
        for obs in self.obstacles:
            if not obs.attached_to_base:
                out.append(obs)
                continue
            if obs.shape == "box":
                out.append(
                    replace(
                        obs,
                        center=tuple(rot @ np.asarray(obs.center) + shift),
                        yaw=obs.yaw + pose.theta,
                    )
                )
            elif obs.shape == "capsule":
                out.append(
                    replace(
                        obs,
                        endpoint_a=tuple(rot @ np.asarray(obs.endpoint_a) + shift),
                        endpoint_b=tuple(rot @ np.asarray(obs.endpoint_b) + shift),
                    )
                )
            else:
                normal = rot @ np.asarray(obs.normal)
                out.append(
                    replace(obs, normal=tuple(normal), offset=obs.offset + float(normal @ shift))
                )
        return Environment(obstacles=tuple(out), d_safe=self.d_safe)

    def active(self, segment_tag: str) -> tuple:
        drilling = segment_tag in ("drill-in", "drill-out")
        return tuple(
            obs for obs in self.obstacles if not (drilling and obs.active_during == "transfer-only")
        )


def module_capsules(chain: KinematicChain, q) -> list:
    """One capsule per module, spanning its input and output origins."""
    if chain.num_modules == 0:
        return []
    fk = fk_batch(chain, np.asarray(q, dtype=float)[None, :])
    p_in = fk["p_in"][0]
    p_out = fk["p_out"][0]
    return [
        Capsule(endpoint_a=p_in[i], endpoint_b=p_out[i], radius=chain.capsule_radii[i])
        for i in range(chain.num_modules)
    ]


def _box_point_sdf(points, center, half_extents, yaw):
    """Signed distance from points (..., 3) to a yawed box."""
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    local = (points - center) @ rot  # row-vector form of R^T (p - c)
    q = np.abs(local) - half_extents
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside


def _segment_box_distance(pa, pb, obstacle: Obstacle):
    """Min signed point-box distance along segments pa->pb, batched (K, 3)."""
    pa = np.atleast_2d(pa)
    pb = np.atleast_2d(pb)
    center = np.asarray(obstacle.center, dtype=float)
    half = np.asarray(obstacle.half_extents, dtype=float)
    if _fastpath is not None:
        return _fastpath.segment_box_distances(
            pa, pb, center, half, obstacle.yaw, coarse=_COARSE_SAMPLES, iters=_REFINE_ITERS
        )
    ts = np.linspace(0.0, 1.0, _COARSE_SAMPLES)
    pts = pa[:, None, :] + ts[None, :, None] * (pb - pa)[:, None, :]
    vals = _box_point_sdf(pts, center, half, obstacle.yaw)
    best = np.argmin(vals, axis=1)
    span = 1.0 / (_COARSE_SAMPLES - 1)
    # the true minimum of a convex profile lies within one sample of the
    # discrete argmin; shrink that bracket by golden-section
    lo = np.clip(ts[best] - span, 0.0, 1.0)
    hi = np.clip(ts[best] + span, 0.0, 1.0)
    d = pb - pa

    def f(t):
        return _box_point_sdf(pa + t[:, None] * d, center, half, obstacle.yaw)

    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(_REFINE_ITERS):
        left = f1 < f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        probe = np.where(left, hi - _GOLDEN * (hi - lo), lo + _GOLDEN * (hi - lo))
        fp = f(probe)
        x1, x2, f1, f2 = (
            np.where(left, probe, x2),
            np.where(left, x1, probe),
            np.where(left, fp, f2),
            np.where(left, f1, fp),
        )
    mid = 0.5 * (lo + hi)
    return np.minimum(f(mid), np.minimum(f1, f2))


def segment_segment_distance(p1, q1, p2, q2) -> float:
    """Closest distance between segments [p1,q1] and [p2,q2] (exact)."""
    p1, q1, p2, q2 = (np.asarray(v, dtype=float) for v in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f_ = float(d2 @ r)
    eps = 1e-15
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s, t = 0.0, np.clip(f_ / e, 0.0, 1.0)
    else:
        c = float(d1 @ r)
        if e <= eps:
            t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = np.clip((b * f_ - c * e) / denom, 0.0, 1.0) if denom > eps * a * e else 0.0
            t = (b * s + f_) / e
            if t < 0.0:
                t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t, s = 1.0, np.clip((b - c) / a, 0.0, 1.0)
    closest1 = p1 + s * d1
    closest2 = p2 + t * d2
    return float(np.linalg.norm(closest1 - closest2))


def capsule_obstacle_distance(capsule: Capsule, obstacle: Obstacle) -> float:
    """Signed separation between a capsule and one obstacle (meters)."""
    a, b = capsule.endpoint_a, capsule.endpoint_b
    if obstacle.shape == "plane":
        normal = np.asarray(obstacle.normal, dtype=float)
        surface = min(float(normal @ a), float(normal @ b)) - obstacle.offset
        return surface - capsule.radius
    if obstacle.shape == "capsule":
        core = segment_segment_distance(
            a, b, np.asarray(obstacle.endpoint_a), np.asarray(obstacle.endpoint_b)
        )
        return core - capsule.radius - obstacle.radius
    return float(_segment_box_distance(a[None], b[None], obstacle)[0]) - capsule.radius


def clearance(
    chain: KinematicChain,
    q,
    env: Environment,
    segment_tag: str = "transfer",
    self_collision: bool = False,
) -> dict:
    """Minimum robot-obstacle distance and the d_safe verdict at one q.

    Obstacles marked transfer-only are ignored during drill segments; the
    first module is never tested against base-attached obstacles. With
    ``self_collision`` enabled, non-adjacent module capsule pairs are
    included too.
    """
    capsules = module_capsules(chain, q)
    min_distance = np.inf
    for obs in env.active(segment_tag):
        for i, cap in enumerate(capsules):
            if obs.attached_to_base and i == 0:
                continue
            min_distance = min(min_distance, capsule_obstacle_distance(cap, obs))
    if self_collision:
        for i in range(len(capsules)):
            for j in range(i + 2, len(capsules)):
                d = (
                    segment_segment_distance(
                        capsules[i].endpoint_a,
                        capsules[i].endpoint_b,
                        capsules[j].endpoint_a,
                        capsules[j].endpoint_b,
                    )
                    - capsules[i].radius
                    - capsules[j].radius
                )
                min_distance = min(min_distance, d)
    return {"min_distance": float(min_distance), "colliding": bool(min_distance < env.d_safe)}


def trajectory_collision(
    chain: KinematicChain,
    q_series,
    env: Environment,
    segment_tags,
    fk=None,
):
    """Vectorized clearance verdicts over an (N, dof) rollout.

    Returns (colliding_any, min_distance, first_loop). Matches per-loop
    ``clearance`` results: same capsules, same activity filters.
    """
    q_series = np.atleast_2d(np.asarray(q_series, dtype=float))
    N = q_series.shape[0]
    if fk is None:
        fk = fk_batch(chain, q_series)
    p_in = fk["p_in"]
    p_out = fk["p_out"]
    n_mod = chain.num_modules
    radii = chain.capsule_radii
    drilling = np.array([tag in ("drill-in", "drill-out") for tag in segment_tags])
    min_d = np.full(N, np.inf)
    for obs in env.obstacles:
        mods = range(1, n_mod) if obs.attached_to_base else range(n_mod)
        mods = list(mods)
        if not mods:
            continue
        pa = p_in[:, mods].reshape(-1, 3)
        pb = p_out[:, mods].reshape(-1, 3)
        if obs.shape == "plane":
            normal = np.asarray(obs.normal, dtype=float)
            d = np.minimum(pa @ normal, pb @ normal) - obs.offset
            d = d.reshape(N, len(mods)) - radii[mods][None, :]
        elif obs.shape == "box":
            d = _segment_box_distance(pa, pb, obs).reshape(N, len(mods)) - radii[mods][None, :]
        else:
            oa = np.asarray(obs.endpoint_a, dtype=float)
            ob = np.asarray(obs.endpoint_b, dtype=float)
            d = np.array(
                [segment_segment_distance(pa[k], pb[k], oa, ob) for k in range(pa.shape[0])]
            ).reshape(N, len(mods))
            d = d - radii[mods][None, :] - obs.radius
        d = d.min(axis=1)
        if obs.active_during == "transfer-only":
            d = np.where(drilling, np.inf, d)
        min_d = np.minimum(min_d, d)
    colliding = min_d < env.d_safe
    first = int(np.argmax(colliding)) if colliding.any() else None
    return bool(colliding.any()), min_d, first


def default_environment(
    d_safe: float = 0.02,
    platform_half_extents=(0.45, 0.35, 0.25),
    platform_mount_setback: float = 0.3,
    wall_offset: float = -1.5,
) -> Environment:
    """Drilling scene: base-attached platform box plus the wall half-space.

    The arm mounts near the platform's front edge (local -x side), so the
    box center sits ``platform_mount_setback`` behind the base footprint.
    """
    platform = Obstacle(
        shape="box",
        center=(platform_mount_setback, 0.0, platform_half_extents[2]),
        half_extents=tuple(platform_half_extents),
        yaw=0.0,
        active_during="all",
        attached_to_base=True,
    )
    wall = Obstacle(
        shape="plane",
        normal=(1.0, 0.0, 0.0),
        offset=wall_offset,
        active_during="transfer-only",
    )
    return Environment(obstacles=(platform, wall), d_safe=d_safe)


def _obstacle_to_record(obs: Obstacle) -> dict:
    rec = {"shape": obs.shape, "active_during": obs.active_during}
    if obs.attached_to_base:
        rec["attached_to_base"] = True
    if obs.shape == "box":
        rec.update(
            center=list(obs.center), half_extents=list(obs.half_extents), yaw=obs.yaw
        )
    elif obs.shape == "capsule":
        rec.update(
            endpoint_a=list(obs.endpoint_a), endpoint_b=list(obs.endpoint_b), radius=obs.radius
        )
    else:
        rec.update(normal=list(obs.normal), offset=obs.offset)
    return rec


def save_environment(env: Environment, path) -> None:
    doc = {"d_safe": env.d_safe, "obstacles": [_obstacle_to_record(o) for o in env.obstacles]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_environment(path) -> Environment:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON: {exc}") from exc
    try:
        obstacles = tuple(Obstacle(**rec) for rec in doc["obstacles"])
        return Environment(obstacles=obstacles, d_safe=float(doc["d_safe"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed environment file: {exc}") from exc
