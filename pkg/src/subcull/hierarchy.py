"""Object masks for every child slot of a BVH.

Leaf slots get the exact voxelization of their triangles.  An inner slot
gathers occupancy from the subtree below it, at most ``L`` levels deep:
triangles of leaves reached within ``L`` levels are voxelized straight into
the slot's grid, and inner descendants exactly ``L`` levels down contribute
their own (already approximated) mask, projected into the slot's grid through
the box-shaped filling patterns.  ``L = inf`` therefore voxelizes every
descendant triangle directly, the tightest possible mask.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .bvh import EMPTY, LEAF, MAX_DEPTH, WIDTH, Bvh
from .geometry import Aabb
from .masks import (
    ONE, ZERO, OccupancyMask, check_resolution, expand_frame, n_words, set_bit,
    trailing_zeros64, voxelize_many_into,
)

# snap projected borders to the parent grid lines when this close (parent-cell units)
SNAP_TOL = 1e-9
# widening of projected child cells (parent-cell units) so that approximated
# masks stay supersets of the direct voxelization, whose cells are dilated by 1e-7
FILL_MARGIN = 2e-7
INF_LEVEL = 1 << 30


def level_value(L) -> int:
    if L is None or L == math.inf:
        return INF_LEVEL
    L = int(L)
    if L < 1:
        raise ValueError("approximation level must be >= 1")
    return L


@dataclass(frozen=True, eq=False)
class FillingPatternTable:
    R: int
    patterns: np.ndarray  # (R**6, n_words(R)) uint64

    def pattern(self, index_min, index_max) -> OccupancyMask:
        return OccupancyMask(self.R, self.patterns[pattern_index(index_min, index_max, self.R)])


@dataclass(eq=False)
class MaskAttachment:
    """Per child slot object masks (zero for empty slots) and their provenance."""

    R: int
    level: float
    masks: np.ndarray  # (n_nodes, 4, n_words(R)) uint64
    exact: np.ndarray  # (n_nodes, 4) bool; True where the mask is a direct voxelization

    def mask(self, node: int, slot: int) -> OccupancyMask:
        return OccupancyMask(self.R, self.masks[node, slot])


def pattern_index(index_min, index_max, R: int) -> int:
    a0, a1, a2 = index_min
    b0, b1, b2 = index_max
    return a0 + R * (a1 + R * (a2 + R * (b0 + R * (b1 + R * b2))))


@njit
def _fill_table(R, out):
    for a2 in range(R):
        for a1 in range(R):
            for a0 in range(R):
                for b2 in range(a2, R):
                    for b1 in range(a1, R):
                        for b0 in range(a0, R):
                            row = a0 + R * (a1 + R * (a2 + R * (b0 + R * (b1 + R * b2))))
                            for z in range(a2, b2 + 1):
                                for y in range(a1, b1 + 1):
                                    for x in range(a0, b0 + 1):
                                        set_bit(out[row], x + R * y + R * R * z)


def build_filling_pattern_table(R: int) -> FillingPatternTable:
    R = check_resolution(R)
    out = np.zeros((R ** 6, n_words(R)), dtype=np.uint64)
    _fill_table(R, out)
    return FillingPatternTable(R, out)


@njit
def _snap(q):
    r = np.floor(q + 0.5)
    if abs(q - r) <= SNAP_TOL:
        return r
    return q


@njit
def axis_indices(pl, pe, cl, ce, R, out_min, out_max):
    """Parent-grid index range covered by each child cell along one axis.

    Child cell x spans borders x and x+1.  The lower border maps with floor and
    the upper one with ceil - 1, so coincident grids project cell-to-cell;
    other grids are widened by FILL_MARGIN.
    """
    margin = 0.0 if (pl == cl and pe == ce) else FILL_MARGIN
    for x in range(R):
        qa = _snap(((cl - pl) * R + x * ce) / pe)
        qb = _snap(((cl - pl) * R + (x + 1) * ce) / pe)
        a = int(np.floor(qa - margin))
        b = int(np.ceil(qb + margin)) - 1
        if a < 0:
            a = 0
        if a > R - 1:
            a = R - 1
        if b > R - 1:
            b = R - 1
        if b < a:
            b = a
        out_min[x] = a
        out_max[x] = b


@njit
def fill_into(out, plo, phi, child_mask, clo, chi, R, table):
    pl0, pl1, pl2, pe0, pe1, pe2 = expand_frame(plo, phi)
    cl0, cl1, cl2, ce0, ce1, ce2 = expand_frame(clo, chi)
    xmin = np.empty(R, dtype=np.int64)
    xmax = np.empty(R, dtype=np.int64)
    ymin = np.empty(R, dtype=np.int64)
    ymax = np.empty(R, dtype=np.int64)
    zmin = np.empty(R, dtype=np.int64)
    zmax = np.empty(R, dtype=np.int64)
    axis_indices(pl0, pe0, cl0, ce0, R, xmin, xmax)
    axis_indices(pl1, pe1, cl1, ce1, R, ymin, ymax)
    axis_indices(pl2, pe2, cl2, ce2, R, zmin, zmax)
    nw = out.shape[0]
    for w in range(child_mask.shape[0]):
        bits = child_mask[w]
        while bits != ZERO:
            i = w * 64 + trailing_zeros64(bits)
            bits &= bits - ONE
            x = i % R
            y = (i // R) % R
            z = i // (R * R)
            row = xmin[x] + R * (ymin[y] + R * (zmin[z] + R * (xmax[x] + R * (ymax[y] + R * zmax[z]))))
            for k in range(nw):
                out[k] |= table[row, k]


def fill_by_approximated_occupancy(mask: OccupancyMask, parent_box: Aabb, child_mask: OccupancyMask,
                                   child_box: Aabb, R: int, table: FillingPatternTable) -> OccupancyMask:
    """``mask`` OR the child's occupancy projected into the parent grid."""
    if not (mask.R == child_mask.R == table.R == R):
        raise ValueError("resolution mismatch")
    out = OccupancyMask(R, mask.words.copy())
    fill_into(out.words, parent_box.lower, parent_box.upper, child_mask.words,
              child_box.lower, child_box.upper, R, table.patterns)
    return out


def projection_ranges(parent_box: Aabb, child_box: Aabb, R: int) -> tuple[np.ndarray, np.ndarray]:
    """(index_min, index_max), each (3, R): parent cells covered per child cell and axis."""
    p = expand_frame(parent_box.lower, parent_box.upper)
    c = expand_frame(child_box.lower, child_box.upper)
    mins = np.empty((3, R), dtype=np.int64)
    maxs = np.empty((3, R), dtype=np.int64)
    for a in range(3):
        axis_indices(p[a], p[3 + a], c[a], c[3 + a], R, mins[a], maxs[a])
    return mins, maxs


@njit
def _attach(child_lower, child_upper, child_kind, child_index, child_count, tris, R, L, table, masks, exact):
    n = child_kind.shape[0]
    cap = WIDTH * MAX_DEPTH + WIDTH
    st_node = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    for node in range(n - 1, -1, -1):
        for slot in range(WIDTH):
            kind = child_kind[node, slot]
            if kind == EMPTY:
                continue
            out = masks[node, slot]
            lo = child_lower[node, slot]
            hi = child_upper[node, slot]
            if kind == LEAF:
                voxelize_many_into(lo, hi, R, tris, child_index[node, slot], child_count[node, slot], out)
                exact[node, slot] = True
                continue
            direct = True
            st_node[0] = child_index[node, slot]
            st_depth[0] = 1
            sp = 1
            while sp > 0:
                sp -= 1
                m = st_node[sp]
                d = st_depth[sp]
                for s2 in range(WIDTH):
                    k2 = child_kind[m, s2]
                    if k2 == EMPTY:
                        continue
                    if k2 == LEAF:
                        voxelize_many_into(lo, hi, R, tris, child_index[m, s2], child_count[m, s2], out)
                    elif d >= L:
                        fill_into(out, lo, hi, masks[m, s2], child_lower[m, s2], child_upper[m, s2], R, table)
                        direct = False
                    else:
                        st_node[sp] = child_index[m, s2]
                        st_depth[sp] = d + 1
                        sp += 1
            exact[node, slot] = direct


def attach_masks(bvh: Bvh, L=None, R: int | None = None,
                 table: FillingPatternTable | None = None) -> Bvh:
    """Return a copy of ``bvh`` carrying an object mask in every child slot.

    ``L`` and ``R`` default to the values in ``bvh.config``.
    """
    R = check_resolution(bvh.config.R if R is None else R)
    L = bvh.config.L if L is None else L
    lv = level_value(L)
    if table is None:
        table = build_filling_pattern_table(R)
    elif table.R != R:
        raise ValueError("filling table resolution mismatch")
    masks = np.zeros((bvh.n_nodes, WIDTH, n_words(R)), dtype=np.uint64)
    exact = np.zeros((bvh.n_nodes, WIDTH), dtype=np.bool_)
    _attach(bvh.child_lower, bvh.child_upper, bvh.child_kind, bvh.child_index, bvh.child_count,
            bvh.tris, R, lv, table.patterns, masks, exact)
    level = math.inf if lv == INF_LEVEL else lv
    return bvh.with_masks(MaskAttachment(R, level, masks, exact))


def direct_slot_mask(bvh: Bvh, node: int, slot: int, R: int) -> OccupancyMask:
    """Voxelize every triangle below a slot straight into its grid (the L = inf mask)."""
    m = OccupancyMask(R)
    idx = bvh.slot_triangles(node, slot)
    tris = np.ascontiguousarray(bvh.tris[idx])
    voxelize_many_into(bvh.child_lower[node, slot], bvh.child_upper[node, slot], R, tris, 0, len(tris), m.words)
    return m
