"""4-wide BVH: binned-SAH binary build, collapse to width 4, SAH costs and node dumps.

Node dump layout (little-endian).  Header, 16 bytes::

    magic "SCBV" | u16 version | u8 R | u8 flags | u32 node count | u32 triangle count

``flags`` bit 0: masks present, bit 1: masks compressed.  Each node is::

    4 x child AABB   (6 x f32: lower xyz, upper xyz; empty slot = +inf / -inf)   96 bytes
    4 x child ref    (u32, see below)                                            16 bytes
    4 x mask         (ceil(R^3/64) x u64)  or  4 x u8 compression-LUT index

so 112 bytes without masks, 144 bytes with R=4 masks, 116 bytes compressed.
A child ref is the inner node index when bit 31 is clear, ``0xFFFFFFFF`` for an
empty slot, and otherwise a leaf: bits 27..30 hold ``count - 1`` and bits
0..26 the first triangle index.  That ref encoding is our own choice; it caps
leaves at 16 triangles and scenes at 2^27 - 1 triangles.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional

import numpy as np

from ._jit import njit
from .geometry import Aabb, triangles_to_array

if TYPE_CHECKING:
    from .compression import CompressedMasks
    from .hierarchy import MaskAttachment

WIDTH = 4
MAX_DEPTH = 64
EMPTY, INNER, LEAF = 0, 1, 2

NODE_MAGIC = b"SCBV"
NODE_VERSION = 1
HEADER = struct.Struct("<4sHBBII")
FLAG_MASKS = 1
FLAG_COMPRESSED = 2
REF_EMPTY = 0xFFFFFFFF
REF_LEAF = 0x80000000
MAX_LEAF_TRIS = 16


class EmptySceneError(ValueError):
    pass


@dataclass(frozen=True)
class BuildConfig:
    R: int = 4
    bins: int = 16
    max_leaf_tris: int = 4
    C_T: float = 1.0
    C_I: float = 1.0
    L: float = math.inf
    width: int = WIDTH

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if not 1 <= self.max_leaf_tris <= MAX_LEAF_TRIS:
            raise ValueError(f"max_leaf_tris must be in [1, {MAX_LEAF_TRIS}]")
        if self.C_T <= 0 or self.C_I <= 0:
            raise ValueError("C_T and C_I must be positive")
        if not (self.L == math.inf or (int(self.L) == self.L and self.L >= 1)):
            raise ValueError("L must be a positive integer or infinity")
        if self.width != WIDTH:
            raise ValueError("only 4-wide BVHs are supported")


@dataclass(eq=False)
class Bvh:
    """Wide BVH in structure-of-arrays form.  Node 0 is the root."""

    child_lower: np.ndarray  # (n, 4, 3) float64, values exactly representable as float32
    child_upper: np.ndarray
    child_kind: np.ndarray  # (n, 4) int8: EMPTY / INNER / LEAF
    child_index: np.ndarray  # (n, 4) int32: node index or first triangle
    child_count: np.ndarray  # (n, 4) int32: triangles in a leaf slot
    tris: np.ndarray  # (N, 3, 3) float64, leaf order
    prim_ids: np.ndarray  # (N,) int64
    root_lower: np.ndarray
    root_upper: np.ndarray
    config: BuildConfig = field(default_factory=BuildConfig)
    masks: Optional["MaskAttachment"] = None
    compression: Optional["CompressedMasks"] = None

    @property
    def n_nodes(self) -> int:
        return len(self.child_kind)

    @property
    def n_tris(self) -> int:
        return len(self.tris)

    @property
    def root_box(self) -> Aabb:
        return Aabb(self.root_lower, self.root_upper)

    def slot_box(self, node: int, slot: int) -> Aabb:
        return Aabb(self.child_lower[node, slot], self.child_upper[node, slot])

    def slots(self):
        """Yield (node, slot) for every non-empty child slot."""
        for n, s in zip(*np.nonzero(self.child_kind != EMPTY)):
            yield int(n), int(s)

    def slot_triangles(self, node: int, slot: int) -> np.ndarray:
        """Indices (into ``tris``) of every triangle below a child slot."""
        kind = self.child_kind[node, slot]
        if kind == LEAF:
            s = self.child_index[node, slot]
            return np.arange(s, s + self.child_count[node, slot])
        if kind == EMPTY:
            return np.empty(0, dtype=np.int64)
        child = self.child_index[node, slot]
        parts = [self.slot_triangles(child, k) for k in range(WIDTH)]
        return np.concatenate(parts)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for n in range(self.n_nodes):
            for s in range(WIDTH):
                if self.child_kind[n, s] == INNER:
                    depth[self.child_index[n, s]] = depth[n] + 1
        return int(depth.max()) + 1

    def with_masks(self, masks) -> "Bvh":
        return replace(self, masks=masks, compression=None)


# ---------------------------------------------------------------------------
# binary binned-SAH build


@njit
def _half_area(lo, hi):
    ex = hi[0] - lo[0]
    ey = hi[1] - lo[1]
    ez = hi[2] - lo[2]
    return ex * ey + ex * ez + ey * ez


@njit
def _build_binary(tlo, thi, cen, bins, max_leaf, ct, ci, order,
                  nlo, nhi, left, right, start, count):
    n_tris = tlo.shape[0]
    stack_node = np.empty(2 * MAX_DEPTH + 2, dtype=np.int64)
    stack_depth = np.empty(2 * MAX_DEPTH + 2, dtype=np.int64)
    scratch = np.empty(n_tris, dtype=np.int64)
    bin_cnt = np.zeros(bins, dtype=np.int64)
    bin_lo = np.empty((bins, 3))
    bin_hi = np.empty((bins, 3))
    acc_lo = np.empty(3)
    acc_hi = np.empty(3)
    right_area = np.empty(bins)
    right_cnt = np.empty(bins, dtype=np.int64)
    start[0] = 0
    count[0] = n_tris
    n_nodes = 1
    sp = 0
    stack_node[0] = 0
    stack_depth[0] = 1
    sp = 1
    max_depth = 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        depth = stack_depth[sp]
        if depth > max_depth:
            max_depth = depth
        s0 = start[node]
        n = count[node]
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for a in range(3):
            nlo[node, a] = np.inf
            nhi[node, a] = -np.inf
        for k in range(s0, s0 + n):
            t = order[k]
            for a in range(3):
                nlo[node, a] = min(nlo[node, a], tlo[t, a])
                nhi[node, a] = max(nhi[node, a], thi[t, a])
                clo[a] = min(clo[a], cen[t, a])
                chi[a] = max(chi[a], cen[t, a])
        left[node] = -1
        right[node] = -1
        if n == 1:
            continue
        if depth >= MAX_DEPTH:
            raise RuntimeError("BVH depth limit exceeded")
        axis = 0
        for a in range(1, 3):
            if chi[a] - clo[a] > chi[axis] - clo[axis]:
                axis = a
        ext = chi[axis] - clo[axis]
        node_area = _half_area(nlo[node], nhi[node])
        leaf_cost = ci * n
        best_cost = np.inf
        best_split = -1
        if ext > 0.0:
            for b in range(bins):
                bin_cnt[b] = 0
                for a in range(3):
                    bin_lo[b, a] = np.inf
                    bin_hi[b, a] = -np.inf
            for k in range(s0, s0 + n):
                t = order[k]
                b = min(int(bins * (cen[t, axis] - clo[axis]) / ext), bins - 1)
                bin_cnt[b] += 1
                for a in range(3):
                    bin_lo[b, a] = min(bin_lo[b, a], tlo[t, a])
                    bin_hi[b, a] = max(bin_hi[b, a], thi[t, a])
            # suffix sweep: right side of split s is bins [s, bins)
            for a in range(3):
                acc_lo[a] = np.inf
                acc_hi[a] = -np.inf
            c = 0
            for b in range(bins - 1, 0, -1):
                c += bin_cnt[b]
                for a in range(3):
                    acc_lo[a] = min(acc_lo[a], bin_lo[b, a])
                    acc_hi[a] = max(acc_hi[a], bin_hi[b, a])
                right_cnt[b] = c
                right_area[b] = _half_area(acc_lo, acc_hi) if c > 0 else 0.0
            for a in range(3):
                acc_lo[a] = np.inf
                acc_hi[a] = -np.inf
            c = 0
            for s in range(1, bins):
                c += bin_cnt[s - 1]
                for a in range(3):
                    acc_lo[a] = min(acc_lo[a], bin_lo[s - 1, a])
                    acc_hi[a] = max(acc_hi[a], bin_hi[s - 1, a])
                if c == 0 or right_cnt[s] == 0:
                    continue
                la = _half_area(acc_lo, acc_hi)
                cost = ct + ci * (la * c + right_area[s] * right_cnt[s]) / node_area if node_area > 0.0 \
                    else ct + ci * n
                if cost < best_cost:
                    best_cost = cost
                    best_split = s
        if n <= max_leaf and leaf_cost <= best_cost:
            continue
        # partition order[s0:s0+n] (stable)
        nl = 0
        if best_split >= 0:
            nr = 0
            for k in range(s0, s0 + n):
                t = order[k]
                b = min(int(bins * (cen[t, axis] - clo[axis]) / ext), bins - 1)
                if b < best_split:
                    order[s0 + nl] = t
                    nl += 1
                else:
                    scratch[nr] = t
                    nr += 1
            for k in range(nr):
                order[s0 + nl + k] = scratch[k]
        else:
            # coincident centroids or no usable split: object median along the axis
            keys = np.empty(n)
            for k in range(n):
                keys[k] = cen[order[s0 + k], axis]
            perm = np.argsort(keys, kind="mergesort")
            for k in range(n):
                scratch[k] = order[s0 + perm[k]]
            for k in range(n):
                order[s0 + k] = scratch[k]
            nl = n // 2
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        start[lc] = s0
        count[lc] = nl
        start[rc] = s0 + nl
        count[rc] = n - nl
        left[node] = lc
        right[node] = rc
        stack_node[sp] = rc
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = lc
        stack_depth[sp] = depth + 1
        sp += 1
    return n_nodes, max_depth


def round_out_f32(lower: np.ndarray, upper: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Round bounds outward to float32-representable values (returned as float64)."""
    lo32 = lower.astype(np.float32)
    hi32 = upper.astype(np.float32)
    lo32 = np.where(lo32.astype(np.float64) > lower, np.nextafter(lo32, np.float32(-np.inf)), lo32)
    hi32 = np.where(hi32.astype(np.float64) < upper, np.nextafter(hi32, np.float32(np.inf)), hi32)
    return lo32.astype(np.float64), hi32.astype(np.float64)


def build_bvh(triangles, config: BuildConfig | None = None) -> Bvh:
    """Binned-SAH binary build, then greedy collapse to a 4-wide tree."""
    config = config or BuildConfig()
    verts, ids = triangles_to_array(triangles)
    n = len(verts)
    if n == 0:
        raise EmptySceneError("empty scene")
    if not np.all(np.isfinite(verts)):
        raise ValueError("scene contains non-finite vertex coordinates")
    if n >= (1 << 27) - 1:
        raise ValueError("scene too large for the node ref encoding")
    tlo = verts.min(axis=1)
    thi = verts.max(axis=1)
    cen = 0.5 * (tlo + thi)
    cap = 2 * n
    order = np.arange(n, dtype=np.int64)
    nlo = np.empty((cap, 3))
    nhi = np.empty((cap, 3))
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    start = np.empty(cap, dtype=np.int64)
    count = np.empty(cap, dtype=np.int64)
    n_bin, _ = _build_binary(tlo, thi, cen, config.bins, config.max_leaf_tris,
                             config.C_T, config.C_I, order, nlo, nhi, left, right, start, count)
    ext = nhi[:n_bin] - nlo[:n_bin]
    area = ext[:, 0] * ext[:, 1] + ext[:, 0] * ext[:, 2] + ext[:, 1] * ext[:, 2]

    def open_children(b: int) -> list[int]:
        # repeatedly open the largest inner child until four slots are used
        kids = [int(left[b]), int(right[b])]
        while len(kids) < WIDTH:
            best = -1
            for i, k in enumerate(kids):
                if left[k] >= 0 and (best < 0 or area[k] > area[kids[best]]):
                    best = i
            if best < 0:
                break
            k = kids[best]
            kids[best:best + 1] = [int(left[k]), int(right[k])]
        return kids

    # pre-order numbering: every child node index exceeds its parent's
    wide: list[list[tuple[int, int]]] = []

    def emit(b: int) -> int:
        idx = len(wide)
        wide.append([])
        kids = [b] if left[b] < 0 else open_children(b)
        wide[idx] = [(k, -1 if left[k] < 0 else emit(k)) for k in kids]
        return idx

    emit(0)
    n_wide = len(wide)
    child_lower = np.full((n_wide, WIDTH, 3), np.inf)
    child_upper = np.full((n_wide, WIDTH, 3), -np.inf)
    child_kind = np.zeros((n_wide, WIDTH), dtype=np.int8)
    child_index = np.zeros((n_wide, WIDTH), dtype=np.int32)
    child_count = np.zeros((n_wide, WIDTH), dtype=np.int32)
    for i in range(n_wide):
        for s, (b, r) in enumerate(wide[i]):
            lo, hi = round_out_f32(nlo[b], nhi[b])
            child_lower[i, s] = lo
            child_upper[i, s] = hi
            if r < 0:
                child_kind[i, s] = LEAF
                child_index[i, s] = start[b]
                child_count[i, s] = count[b]
            else:
                child_kind[i, s] = INNER
                child_index[i, s] = r
    occupied = child_kind[0] != EMPTY
    root_lower = child_lower[0][occupied].min(axis=0)
    root_upper = child_upper[0][occupied].max(axis=0)
    return Bvh(child_lower, child_upper, child_kind, child_index, child_count,
               np.ascontiguousarray(verts[order]), ids[order], root_lower, root_upper, config)


# ---------------------------------------------------------------------------
# SAH


def _slot_areas(bvh: Bvh) -> np.ndarray:
    e = np.where((bvh.child_kind != EMPTY)[..., None], bvh.child_upper - bvh.child_lower, 0.0)
    return 2.0 * (e[..., 0] * e[..., 1] + e[..., 0] * e[..., 2] + e[..., 1] * e[..., 2])


def _sah(bvh: Bvh, config: BuildConfig, weights: np.ndarray) -> float:
    area = _slot_areas(bvh) * weights
    inner = float(np.sum(area[bvh.child_kind == INNER]))
    leaf_terms = area * bvh.child_count
    leaf = float(np.sum(leaf_terms[bvh.child_kind == LEAF]))
    return (config.C_T * inner + config.C_I * leaf) / bvh.root_box.surface_area()


def sah_cost(bvh: Bvh, config: BuildConfig | None = None) -> float:
    """Surface-area cost.  The terms run over child slots; the root box only normalizes."""
    return _sah(bvh, config or bvh.config, np.ones(bvh.child_kind.shape))


def masked_sah_cost(bvh: Bvh, config: BuildConfig | None = None, compressed: bool = False) -> float:
    """SAH with every node's area weighted by its mask occupancy popcount / R^3."""
    if bvh.masks is None:
        raise ValueError("masked SAH needs masks attached")
    from .masks import popcount_words

    masks = bvh.masks.masks
    if compressed:
        if bvh.compression is None:
            raise ValueError("no compression attached")
        masks = bvh.compression.decompressed(bvh)
    R = bvh.masks.R
    pc = np.zeros(bvh.child_kind.shape)
    for n, s in bvh.slots():
        pc[n, s] = popcount_words(masks[n, s])
    return _sah(bvh, config or bvh.config, pc / R ** 3)


# ---------------------------------------------------------------------------
# serialization


def _encode_refs(bvh: Bvh) -> np.ndarray:
    refs = np.full(bvh.child_kind.shape, REF_EMPTY, dtype=np.uint32)
    inner = bvh.child_kind == INNER
    leaf = bvh.child_kind == LEAF
    refs[inner] = bvh.child_index[inner].astype(np.uint32)
    refs[leaf] = (REF_LEAF | ((bvh.child_count[leaf].astype(np.uint32) - 1) << 27)
                  | bvh.child_index[leaf].astype(np.uint32))
    return refs


def node_size(R: int, with_masks: bool = True, compressed: bool = False) -> int:
    from .masks import n_words

    base = WIDTH * 24 + WIDTH * 4
    if not with_masks:
        return base
    return base + (WIDTH if compressed else WIDTH * n_words(R) * 8)


def serialize_nodes(bvh: Bvh, compressed: bool = False, with_masks: bool = True) -> bytes:
    """Header followed by the fixed-size node records."""
    if compressed and not with_masks:
        raise ValueError("compressed layout implies masks")
    if with_masks and bvh.masks is None:
        raise ValueError("masks requested but none attached")
    if compressed and bvh.compression is None:
        raise ValueError("compressed layout requested without a compression LUT")
    if compressed and bvh.compression.indices.max(initial=0) > 255:
        raise ValueError("1-byte mask indices need a compression LUT of at most 256 masks")
    n = bvh.n_nodes
    R = bvh.masks.R if bvh.masks is not None else bvh.config.R
    flags = (FLAG_MASKS if with_masks else 0) | (FLAG_COMPRESSED if compressed else 0)
    header = HEADER.pack(NODE_MAGIC, NODE_VERSION, R, flags, n, bvh.n_tris)
    boxes = np.concatenate([bvh.child_lower, bvh.child_upper], axis=2).astype("<f4").reshape(n, -1)
    parts = [boxes.view(np.uint8).reshape(n, -1), _encode_refs(bvh).astype("<u4").view(np.uint8).reshape(n, -1)]
    if compressed:
        parts.append(bvh.compression.indices.astype(np.uint8).reshape(n, -1))
    elif with_masks:
        parts.append(bvh.masks.masks.astype("<u8").view(np.uint8).reshape(n, -1))
    body = np.concatenate(parts, axis=1)
    assert body.shape[1] == node_size(R, with_masks, compressed)
    return header + body.tobytes()


@dataclass
class NodeDump:
    R: int
    flags: int
    n_tris: int
    child_lower: np.ndarray
    child_upper: np.ndarray
    refs: np.ndarray
    masks: Optional[np.ndarray] = None
    indices: Optional[np.ndarray] = None


def parse_nodes(data: bytes) -> NodeDump:
    """Inverse of :func:`serialize_nodes` (decodes the header and node records)."""
    from .masks import n_words

    magic, version, R, flags, n, n_tris = HEADER.unpack_from(data)
    if magic != NODE_MAGIC or version != NODE_VERSION:
        raise ValueError("not a node dump")
    with_masks = bool(flags & FLAG_MASKS)
    compressed = bool(flags & FLAG_COMPRESSED)
    size = node_size(R, with_masks, compressed)
    body = np.frombuffer(data, dtype=np.uint8, offset=HEADER.size, count=n * size).reshape(n, size)
    boxes = body[:, :96].copy().view("<f4").reshape(n, WIDTH, 6).astype(np.float64)
    refs = body[:, 96:112].copy().view("<u4").reshape(n, WIDTH)
    out = NodeDump(R, flags, n_tris, boxes[..., :3], boxes[..., 3:], refs)
    if compressed:
        out.indices = body[:, 112:116].copy()
    elif with_masks:
        out.masks = body[:, 112:].copy().view("<u8").reshape(n, WIDTH, n_words(R)).astype(np.uint64)
    return out


def dump_bvh(bvh: Bvh, path, compressed: bool = False) -> int:
    """Write nodes, then (compressed) the LUT masks, then the triangles.  Returns bytes written."""
    with_masks = bvh.masks is not None
    blob = serialize_nodes(bvh, compressed=compressed, with_masks=with_masks)
    tail = []
    if compressed:
        lut = bvh.compression.lut
        tail.append(struct.pack("<H", len(lut.masks)))
        tail.append(lut.masks.astype("<u8").tobytes())
    tail.append(bvh.prim_ids.astype("<i8").tobytes())
    tail.append(bvh.tris.astype("<f8").tobytes())
    data = blob + b"".join(tail)
    with open(path, "wb") as f:
        f.write(data)
    return len(data)
