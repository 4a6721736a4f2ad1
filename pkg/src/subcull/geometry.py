"""Vectors, rays, boxes and triangles, plus the three primitive tests.

The public functions take the small value types defined here.  The ``*_kernel``
functions are the njit versions the traversal and mask builders call in their
inner loops; they work on plain float64 arrays and scalars.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._jit import njit

INF = np.inf


def vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    return a


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = INF

    def __post_init__(self):
        object.__setattr__(self, "origin", vec3(self.origin))
        object.__setattr__(self, "direction", vec3(self.direction))
        if not np.any(self.direction != 0.0):
            raise ValueError("ray direction must be non-zero")
        if not self.t_min <= self.t_max:
            raise ValueError("ray requires t_min <= t_max")

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class Aabb:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", vec3(self.lower))
        object.__setattr__(self, "upper", vec3(self.upper))
        if np.any(self.lower > self.upper):
            raise ValueError(f"invalid box: lower {self.lower} > upper {self.upper}")

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.lower

    def surface_area(self) -> float:
        return surface_area(self.lower, self.upper)

    def contains(self, other: "Aabb", tol: float = 0.0) -> bool:
        return bool(np.all(other.lower >= self.lower - tol) and np.all(other.upper <= self.upper + tol))

    @classmethod
    def around(cls, points) -> "Aabb":
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return cls(p.min(axis=0), p.max(axis=0))


@dataclass(frozen=True)
class Triangle:
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    primitive_id: int = 0

    def __post_init__(self):
        for name in ("v0", "v1", "v2"):
            object.__setattr__(self, name, vec3(getattr(self, name)))

    @property
    def vertices(self) -> np.ndarray:
        return np.stack([self.v0, self.v1, self.v2])

    def bounds(self) -> Aabb:
        return Aabb.around(self.vertices)


class AabbHit(NamedTuple):
    t_enter: float
    t_exit: float
    p0: np.ndarray
    p1: np.ndarray


class TriangleHit(NamedTuple):
    t: float
    u: float
    v: float


def triangles_to_array(triangles) -> tuple[np.ndarray, np.ndarray]:
    """Pack Triangle objects, or raw vertex triples, into vertex and id arrays.

    Raw vertices get ids in input order.
    """
    if not isinstance(triangles, np.ndarray):
        triangles = list(triangles)
        if triangles and not isinstance(triangles[0], Triangle):
            triangles = np.asarray(triangles, dtype=np.float64)
    if isinstance(triangles, np.ndarray):
        verts = np.ascontiguousarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
        return verts, np.arange(len(verts), dtype=np.int64)
    tris = triangles
    verts = np.empty((len(tris), 3, 3), dtype=np.float64)
    ids = np.empty(len(tris), dtype=np.int64)
    for i, t in enumerate(tris):
        verts[i, 0], verts[i, 1], verts[i, 2] = t.v0, t.v1, t.v2
        ids[i] = t.primitive_id
    if len(np.unique(ids)) != len(ids):
        raise ValueError("primitive ids must be unique within a scene")
    return verts, ids


def surface_area(lower, upper) -> float:
    e = np.asarray(upper, dtype=np.float64) - np.asarray(lower, dtype=np.float64)
    return float(2.0 * (e[0] * e[1] + e[0] * e[2] + e[1] * e[2]))


# ---------------------------------------------------------------------------
# kernels


@njit
def ray_box_kernel(o, d, inv, lo, hi, tmin, tmax):
    """Slab test; returns (hit, t_enter, t_exit) with the interval clipped to [tmin, tmax]."""
    t0 = tmin
    t1 = tmax
    for a in range(3):
        if d[a] == 0.0:
            if o[a] < lo[a] or o[a] > hi[a]:
                return False, t0, t1
        else:
            ta = (lo[a] - o[a]) * inv[a]
            tb = (hi[a] - o[a]) * inv[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    return t0 <= t1, t0, t1


@njit
def clamp_point(o, d, t, lo, hi, out):
    for a in range(3):
        v = o[a] + t * d[a]
        if v < lo[a]:
            v = lo[a]
        elif v > hi[a]:
            v = hi[a]
        out[a] = v


@njit
def ray_triangle_kernel(o, d, tri, tmin, tmax):
    """Moller-Trumbore; returns (hit, t, u, v).  Zero-area triangles never hit."""
    ax, ay, az = tri[0, 0], tri[0, 1], tri[0, 2]
    e1x, e1y, e1z = tri[1, 0] - ax, tri[1, 1] - ay, tri[1, 2] - az
    e2x, e2y, e2z = tri[2, 0] - ax, tri[2, 1] - ay, tri[2, 2] - az
    nx = e1y * e2z - e1z * e2y
    ny = e1z * e2x - e1x * e2z
    nz = e1x * e2y - e1y * e2x
    if nx == 0.0 and ny == 0.0 and nz == 0.0:
        return False, 0.0, 0.0, 0.0
    px = d[1] * e2z - d[2] * e2y
    py = d[2] * e2x - d[0] * e2z
    pz = d[0] * e2y - d[1] * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return False, 0.0, 0.0, 0.0
    inv_det = 1.0 / det
    sx, sy, sz = o[0] - ax, o[1] - ay, o[2] - az
    u = (sx * px + sy * py + sz * pz) * inv_det
    if u < 0.0 or u > 1.0:
        return False, 0.0, 0.0, 0.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (d[0] * qx + d[1] * qy + d[2] * qz) * inv_det
    if v < 0.0 or u + v > 1.0:
        return False, 0.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
    if t < tmin or t > tmax:
        return False, 0.0, 0.0, 0.0
    return True, t, u, v


@njit
def sweep_overlap_kernel(mlo, mhi, disp, slo, shi, strict):
    """Does box [mlo, mhi] moved by t*disp, t in [0, 1], overlap [slo, shi]?

    Per-axis contact intervals in t are intersected.  ``strict`` demands
    interior overlap (touching faces do not count); otherwise the test is on
    closed sets and touching counts.
    """
    lo = 0.0
    hi = 1.0
    for a in range(3):
        if disp[a] == 0.0:
            if strict:
                if not (mlo[a] < shi[a] and mhi[a] > slo[a]):
                    return False
            else:
                if not (mlo[a] <= shi[a] and mhi[a] >= slo[a]):
                    return False
        else:
            ta = (slo[a] - mhi[a]) / disp[a]
            tb = (shi[a] - mlo[a]) / disp[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > lo:
                lo = ta
            if tb < hi:
                hi = tb
    if strict:
        return lo < hi
    return lo <= hi


# ---------------------------------------------------------------------------
# public API


def _inv_dir(d: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(d != 0.0, 1.0 / np.where(d != 0.0, d, 1.0), INF)


def intersect_ray_aabb(ray: Ray, box: Aabb) -> Optional[AabbHit]:
    """Clip ``ray`` against ``box``; hit points are clamped into the box."""
    hit, t0, t1 = ray_box_kernel(ray.origin, ray.direction, _inv_dir(ray.direction),
                                 box.lower, box.upper, float(ray.t_min), float(ray.t_max))
    if not hit:
        return None
    p0 = np.empty(3)
    p1 = np.empty(3)
    clamp_point(ray.origin, ray.direction, t0, box.lower, box.upper, p0)
    clamp_point(ray.origin, ray.direction, t1, box.lower, box.upper, p1)
    return AabbHit(float(t0), float(t1), p0, p1)


def intersect_ray_triangle(ray: Ray, tri: Triangle) -> Optional[TriangleHit]:
    hit, t, u, v = ray_triangle_kernel(ray.origin, ray.direction, tri.vertices,
                                       float(ray.t_min), float(ray.t_max))
    if not hit:
        return None
    return TriangleHit(float(t), float(u), float(v))


def sweep_box_overlap(moving: Aabb, displacement, static_box: Aabb, strict: bool = False) -> bool:
    """True iff ``moving`` translated along ``displacement`` (t in [0, 1]) meets ``static_box``.

    Closed-set semantics by default, so touching is a hit.
    """
    return bool(sweep_overlap_kernel(moving.lower, moving.upper, vec3(displacement),
                                     static_box.lower, static_box.upper, strict))


def boxes_overlap(a: Aabb, b: Aabb) -> bool:
    return bool(np.all(a.lower <= b.upper) and np.all(b.lower <= a.upper))
