"""Stack-based traversal of the 4-wide BVH with optional subspace culling.

A child whose box the ray hits is additionally tested against its object
mask: the ray's entry/exit points in that box (reused from the slab test)
give a ray mask, and the child is skipped when the two masks share no cell.
Because every mask is conservative, a skipped child never holds a hit inside
the current ray interval, so all modes return exactly the same hit.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._jit import njit, prange
from .bvh import EMPTY, INNER, LEAF, MAX_DEPTH, WIDTH, Bvh
from .compression import RayObjectBitTable
from .geometry import Ray, clamp_point, ray_box_kernel, ray_triangle_kernel
from .masks import and_nonzero, dda_into, expand_frame, n_words
from .raylut import RayMaskLut, lut_linear_index

DEFAULT_STACK_SIZE = WIDTH * MAX_DEPTH

STATUS_OK = 0
STATUS_OVERFLOW = 1


class CullingMode(enum.IntEnum):
    OFF = 0
    IDEAL_DDA = 1
    RAY_MASK_LUT = 2
    COMPRESSED_BIT_TABLE = 3

    @classmethod
    def parse(cls, name: "str | CullingMode") -> "CullingMode":
        if isinstance(name, (cls, int)):
            return cls(name)
        aliases = {"off": cls.OFF, "ideal": cls.IDEAL_DDA, "lut": cls.RAY_MASK_LUT,
                   "compressed": cls.COMPRESSED_BIT_TABLE}
        key = str(name).lower()
        if key in aliases:
            return aliases[key]
        return cls[key.upper()]


class ConfigurationError(ValueError):
    """The BVH or lookup tables do not support the requested culling mode."""


class TraversalError(RuntimeError):
    pass


@dataclass
class TraversalStats:
    node_tests: int = 0
    triangle_tests: int = 0

    @property
    def units(self) -> int:
        return self.node_tests + self.triangle_tests

    def add(self, node_tests: int, triangle_tests: int) -> None:
        self.node_tests += int(node_tests)
        self.triangle_tests += int(triangle_tests)

    def __add__(self, other: "TraversalStats") -> "TraversalStats":
        return TraversalStats(self.node_tests + other.node_tests,
                              self.triangle_tests + other.triangle_tests)


class HitRecord(NamedTuple):
    t: float
    primitive_id: int
    u: float
    v: float

    @property
    def barycentrics(self) -> tuple[float, float, float]:
        return (1.0 - self.u - self.v, self.u, self.v)


@dataclass(frozen=True)
class CullingTables:
    """Lookup tables a culling mode may need besides the BVH itself."""

    ray_lut: Optional[RayMaskLut] = None
    bit_table: Optional[RayObjectBitTable] = None


@dataclass(frozen=True, eq=False)
class PreparedScene:
    """Flat arrays handed to the kernels; built once per (bvh, mode)."""

    mode: CullingMode
    lower: np.ndarray
    upper: np.ndarray
    kind: np.ndarray
    index: np.ndarray
    count: np.ndarray
    tris: np.ndarray
    prim_ids: np.ndarray
    root_lower: np.ndarray
    root_upper: np.ndarray
    R: int
    masks: np.ndarray
    ray_entries: np.ndarray
    R_ray: int
    comp_index: np.ndarray
    bit_table: np.ndarray

    def args(self):
        return (int(self.mode), self.lower, self.upper, self.kind, self.index, self.count, self.tris,
                self.root_lower, self.root_upper, self.R, self.masks, self.ray_entries, self.R_ray,
                self.comp_index, self.bit_table)


def prepare(bvh: Bvh, mode, tables: CullingTables | None = None) -> PreparedScene:
    mode = CullingMode.parse(mode)
    tables = tables or CullingTables()
    R = bvh.masks.R if bvh.masks is not None else bvh.config.R
    masks = np.zeros((1, WIDTH, 1), dtype=np.uint64)
    ray_entries = np.zeros((1, 1), dtype=np.uint64)
    R_ray = 1
    comp_index = np.zeros((1, WIDTH), dtype=np.int64)
    bit_table = np.zeros((1, 1), dtype=np.uint64)
    if mode != CullingMode.OFF:
        if bvh.masks is None:
            raise ConfigurationError(f"mode {mode.name} needs object masks")
        masks = bvh.masks.masks
    if mode == CullingMode.RAY_MASK_LUT:
        if tables.ray_lut is None:
            raise ConfigurationError("mode RAY_MASK_LUT needs a ray mask LUT")
        if tables.ray_lut.R != R:
            raise ConfigurationError(f"ray mask LUT built for R={tables.ray_lut.R}, masks use R={R}")
        ray_entries = tables.ray_lut.entries
        R_ray = tables.ray_lut.R_ray
    if mode == CullingMode.COMPRESSED_BIT_TABLE:
        if bvh.compression is None:
            raise ConfigurationError("mode COMPRESSED_BIT_TABLE needs compressed masks")
        if tables.bit_table is None:
            raise ConfigurationError("mode COMPRESSED_BIT_TABLE needs a ray/object bit table")
        bits = tables.bit_table.bits
        if bits.shape[0] != R ** 6 or bits.shape[1] * 64 < len(bvh.compression.lut):
            raise ConfigurationError("bit table does not match R or the compression LUT size")
        bit_table = bits
        R_ray = R
        comp_index = bvh.compression.indices.astype(np.int64)
    return PreparedScene(mode, bvh.child_lower, bvh.child_upper, bvh.child_kind.astype(np.int64),
                         bvh.child_index.astype(np.int64), bvh.child_count.astype(np.int64),
                         bvh.tris, bvh.prim_ids, bvh.root_lower, bvh.root_upper, R, masks,
                         ray_entries, R_ray, comp_index, bit_table)


@njit
def _mask_test(mode, node, slot, lo, hi, p0, p1, R, masks, ray_entries, R_ray, comp_index, bit_table,
               scratch):
    if mode == 1:
        for k in range(scratch.shape[0]):
            scratch[k] = 0
        l0, l1, l2, e0, e1, e2 = expand_frame(lo, hi)
        dda_into(l0, l1, l2, e0, e1, e2, R, p0, p1, scratch)
        return and_nonzero(scratch, masks[node, slot])
    li = lut_linear_index(lo, hi, p0, p1, R_ray)
    if mode == 2:
        return and_nonzero(ray_entries[li], masks[node, slot])
    j = comp_index[node, slot]
    return (bit_table[li, j >> 6] >> np.uint64(j & 63)) & np.uint64(1) != 0


@njit
def trace_kernel(o, d, tmin, tmax, any_hit, mode, lower, upper, kind, index, count, tris,
                 root_lower, root_upper, R, masks, ray_entries, R_ray, comp_index, bit_table,
                 st_kind, st_index, st_count, st_t, scratch):
    """Trace one ray.

    Returns (status, hit, t, u, v, triangle_index, node_tests, triangle_tests).
    """
    inv = np.empty(3)
    for a in range(3):
        inv[a] = 1.0 / d[a] if d[a] != 0.0 else np.inf
    p0 = np.empty(3)
    p1 = np.empty(3)
    hit_t = np.empty(WIDTH)
    hit_slot = np.empty(WIDTH, dtype=np.int64)
    node_tests = 1
    tri_tests = 0
    closest = tmax
    found = False
    best_u = 0.0
    best_v = 0.0
    best_tri = -1
    ok, t0, t1 = ray_box_kernel(o, d, inv, root_lower, root_upper, tmin, closest)
    if not ok:
        return STATUS_OK, False, closest, 0.0, 0.0, -1, node_tests, tri_tests
    cap = st_kind.shape[0]
    sp = 0
    st_kind[0] = INNER
    st_index[0] = 0
    st_count[0] = 0
    st_t[0] = t0
    sp = 1
    while sp > 0:
        sp -= 1
        k = st_kind[sp]
        if st_t[sp] > closest:
            continue
        if k == LEAF:
            start = st_index[sp]
            for i in range(start, start + st_count[sp]):
                tri_tests += 1
                h, t, u, v = ray_triangle_kernel(o, d, tris[i], tmin, closest)
                if h and (t < closest or not found):
                    found = True
                    closest = t
                    best_u = u
                    best_v = v
                    best_tri = i
                    if any_hit:
                        return STATUS_OK, True, closest, best_u, best_v, best_tri, node_tests, tri_tests
            continue
        node = st_index[sp]
        node_tests += 1
        nh = 0
        for s in range(WIDTH):
            if kind[node, s] == EMPTY:
                continue
            lo = lower[node, s]
            hi = upper[node, s]
            ok, t0, t1 = ray_box_kernel(o, d, inv, lo, hi, tmin, closest)
            if not ok:
                continue
            if mode != 0:
                clamp_point(o, d, t0, lo, hi, p0)
                clamp_point(o, d, t1, lo, hi, p1)
                if not _mask_test(mode, node, s, lo, hi, p0, p1, R, masks, ray_entries, R_ray,
                                  comp_index, bit_table, scratch):
                    continue
            # insertion sort by (t_enter, slot)
            j = nh
            while j > 0 and hit_t[j - 1] > t0:
                hit_t[j] = hit_t[j - 1]
                hit_slot[j] = hit_slot[j - 1]
                j -= 1
            hit_t[j] = t0
            hit_slot[j] = s
            nh += 1
        if sp + nh > cap:
            return STATUS_OVERFLOW, found, closest, best_u, best_v, best_tri, node_tests, tri_tests
        for j in range(nh - 1, -1, -1):
            s = hit_slot[j]
            st_kind[sp] = kind[node, s]
            st_index[sp] = index[node, s]
            st_count[sp] = count[node, s]
            st_t[sp] = hit_t[j]
            sp += 1
    return STATUS_OK, found, closest, best_u, best_v, best_tri, node_tests, tri_tests


BLOCK = 64


@njit(parallel=True)
def trace_batch_kernel(origins, dirs, tmins, tmaxs, any_hit, stack_size, mode, lower, upper, kind,
                       index, count, tris, root_lower, root_upper, R, masks, ray_entries, R_ray,
                       comp_index, bit_table, status, hit, t_out, u_out, v_out, tri_out,
                       node_out, tri_tests_out):
    n = origins.shape[0]
    n_blocks = (n + BLOCK - 1) // BLOCK
    nw = masks.shape[2]
    for b in prange(n_blocks):
        st_kind = np.empty(stack_size, dtype=np.int64)
        st_index = np.empty(stack_size, dtype=np.int64)
        st_count = np.empty(stack_size, dtype=np.int64)
        st_t = np.empty(stack_size)
        scratch = np.zeros(nw, dtype=np.uint64)
        for r in range(b * BLOCK, min(n, (b + 1) * BLOCK)):
            res = trace_kernel(origins[r], dirs[r], tmins[r], tmaxs[r], any_hit, mode, lower, upper,
                               kind, index, count, tris, root_lower, root_upper, R, masks,
                               ray_entries, R_ray, comp_index, bit_table, st_kind, st_index,
                               st_count, st_t, scratch)
            status[r] = res[0]
            hit[r] = res[1]
            t_out[r] = res[2]
            u_out[r] = res[3]
            v_out[r] = res[4]
            tri_out[r] = res[5]
            node_out[r] = res[6]
            tri_tests_out[r] = res[7]


class BatchResult(NamedTuple):
    hit: np.ndarray
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    primitive_id: np.ndarray  # -1 where nothing was hit
    triangle_index: np.ndarray
    node_tests: np.ndarray
    triangle_tests: np.ndarray

    def stats(self) -> TraversalStats:
        return TraversalStats(int(self.node_tests.sum()), int(self.triangle_tests.sum()))


def trace_rays(scene: PreparedScene, origins, directions, t_min=0.0, t_max=np.inf,
               any_hit: bool = False, stack_size: int = DEFAULT_STACK_SIZE) -> BatchResult:
    """Trace a batch of rays; per-ray counters make results independent of threading."""
    o = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
    n = len(o)
    tmins = np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,)).copy()
    tmaxs = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,)).copy()
    status = np.zeros(n, dtype=np.int64)
    hit = np.zeros(n, dtype=np.bool_)
    t = np.zeros(n)
    u = np.zeros(n)
    v = np.zeros(n)
    tri = np.zeros(n, dtype=np.int64)
    nodes = np.zeros(n, dtype=np.int64)
    tri_tests = np.zeros(n, dtype=np.int64)
    trace_batch_kernel(o, d, tmins, tmaxs, any_hit, stack_size, *scene.args(), status, hit, t, u, v,
                       tri, nodes, tri_tests)
    if np.any(status == STATUS_OVERFLOW):
        raise TraversalError("traversal stack overflow")
    prim = np.where(hit, scene.prim_ids[np.maximum(tri, 0)], -1)
    return BatchResult(hit, t, u, v, prim, tri, nodes, tri_tests)


def _single(bvh, ray, mode, tables, stats, any_hit, stack_size):
    scene = bvh if isinstance(bvh, PreparedScene) else prepare(bvh, mode, tables)
    nw = scene.masks.shape[2]
    res = trace_kernel(ray.origin, ray.direction, float(ray.t_min), float(ray.t_max), any_hit,
                       *scene.args(), np.empty(stack_size, dtype=np.int64),
                       np.empty(stack_size, dtype=np.int64), np.empty(stack_size, dtype=np.int64),
                       np.empty(stack_size), np.zeros(nw, dtype=np.uint64))
    status, found, t, u, v, tri, nt, tt = res
    if stats is not None:
        stats.add(nt, tt)
    if status == STATUS_OVERFLOW:
        raise TraversalError("traversal stack overflow")
    if not found:
        return None
    return HitRecord(float(t), int(scene.prim_ids[tri]), float(u), float(v))


def traverse(bvh: "Bvh | PreparedScene", ray: Ray, mode=CullingMode.OFF,
             tables: CullingTables | None = None, stats: TraversalStats | None = None,
             stack_size: int = DEFAULT_STACK_SIZE) -> Optional[HitRecord]:
    """Closest hit along ``ray`` or None.  Counters are added to ``stats``."""
    return _single(bvh, ray, mode, tables, stats, False, stack_size)


def traverse_any(bvh: "Bvh | PreparedScene", ray: Ray, mode=CullingMode.OFF,
                 tables: CullingTables | None = None, stats: TraversalStats | None = None,
                 stack_size: int = DEFAULT_STACK_SIZE) -> bool:
    """True as soon as any triangle is hit inside the ray interval."""
    return _single(bvh, ray, mode, tables, stats, True, stack_size) is not None
