"""R^3-bit occupancy masks, conservative triangle voxelization and the DDA walk.

Bit layout: cell (x, y, z) of an R x R x R grid is bit ``x + R*y + R*R*z``;
bit ``i`` lives in 64-bit word ``i // 64`` at position ``i % 64``.  Bits at
positions >= R^3 are always zero.  On disk a mask is its word array,
little-endian, ``ceil(R^3 / 64)`` words.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ._jit import njit
from .geometry import Aabb, Triangle, vec3

MIN_R = 2
MAX_R = 8
# relative dilation of each cell box during voxelization
VOXEL_EPS = 1e-7
# degenerate frame axes are widened to this fraction of the largest extent
FRAME_EPS = 1e-6

ZERO = np.uint64(0)
ONE = np.uint64(1)
ALL = np.uint64(0xFFFFFFFFFFFFFFFF)
_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_S1 = np.uint64(1)
_S2 = np.uint64(2)
_S4 = np.uint64(4)
_S8 = np.uint64(8)
_S16 = np.uint64(16)
_S32 = np.uint64(32)
_LOW7 = np.uint64(0x7F)


def n_words(R: int) -> int:
    return (R * R * R + 63) // 64


def check_resolution(R: int) -> int:
    R = int(R)
    if not MIN_R <= R <= MAX_R:
        raise ValueError(f"mask resolution must be in [{MIN_R}, {MAX_R}], got {R}")
    return R


# ---------------------------------------------------------------------------
# word-level kernels


@njit
def popcount64(x):
    x = x - ((x >> _S1) & _M1)
    x = (x & _M2) + ((x >> _S2) & _M2)
    x = (x + (x >> _S4)) & _M4
    x = x + (x >> _S8)
    x = x + (x >> _S16)
    x = x + (x >> _S32)
    return int(x & _LOW7)


@njit
def popcount_words(words):
    c = 0
    for i in range(words.shape[0]):
        c += popcount64(words[i])
    return c


@njit
def trailing_zeros64(x):
    # x must be non-zero
    return popcount64((x & (~x + ONE)) - ONE)


@njit
def lsb_index(words):
    """Index of the least significant set bit of a word array, or -1."""
    for i in range(words.shape[0]):
        if words[i] != ZERO:
            return i * 64 + trailing_zeros64(words[i])
    return -1


@njit
def and_nonzero(a, b):
    for i in range(a.shape[0]):
        if (a[i] & b[i]) != ZERO:
            return True
    return False


@njit
def is_superset(a, b):
    """Every bit of ``b`` is also set in ``a``."""
    for i in range(a.shape[0]):
        if (b[i] & ~a[i]) != ZERO:
            return False
    return True


@njit
def set_bit(words, i):
    words[i >> 6] |= ONE << np.uint64(i & 63)


@njit
def get_bit(words, i):
    return ((words[i >> 6] >> np.uint64(i & 63)) & ONE) != ZERO


def full_words(R: int) -> np.ndarray:
    nbits = R ** 3
    w = np.zeros(n_words(R), dtype=np.uint64)
    for i in range(len(w)):
        bits = min(64, nbits - 64 * i)
        w[i] = ALL if bits == 64 else np.uint64((1 << bits) - 1)
    return w


# ---------------------------------------------------------------------------
# grid frames


@njit
def expand_frame(lo, hi):
    """Grid origin and extent for a box, widening zero-extent axes symmetrically."""
    e0 = hi[0] - lo[0]
    e1 = hi[1] - lo[1]
    e2 = hi[2] - lo[2]
    m = max(e0, max(e1, e2))
    eps = FRAME_EPS * m if m > 0.0 else FRAME_EPS
    l0, l1, l2 = lo[0], lo[1], lo[2]
    if e0 <= 0.0:
        l0 -= 0.5 * eps
        e0 = eps
    if e1 <= 0.0:
        l1 -= 0.5 * eps
        e1 = eps
    if e2 <= 0.0:
        l2 -= 0.5 * eps
        e2 = eps
    return l0, l1, l2, e0, e1, e2


@njit
def cell_index(p, lower, extent, n):
    """min(floor(n * (p - lower) / extent), n - 1), also clamped below at 0."""
    i = int(np.floor(n * (p - lower) / extent))
    if i > n - 1:
        i = n - 1
    if i < 0:
        i = 0
    return i


# ---------------------------------------------------------------------------
# triangle/box overlap (separating axis test)


@njit
def _axis_sep(p0, p1, p2, rad):
    mn = min(p0, min(p1, p2))
    mx = max(p0, max(p1, p2))
    return mn > rad or mx < -rad


@njit
def tri_box_overlap(cx, cy, cz, hx, hy, hz, tri):
    """Closed triangle vs closed box (center, half-size); degenerate triangles allowed."""
    v0x, v0y, v0z = tri[0, 0] - cx, tri[0, 1] - cy, tri[0, 2] - cz
    v1x, v1y, v1z = tri[1, 0] - cx, tri[1, 1] - cy, tri[1, 2] - cz
    v2x, v2y, v2z = tri[2, 0] - cx, tri[2, 1] - cy, tri[2, 2] - cz
    # box face normals
    if min(v0x, min(v1x, v2x)) > hx or max(v0x, max(v1x, v2x)) < -hx:
        return False
    if min(v0y, min(v1y, v2y)) > hy or max(v0y, max(v1y, v2y)) < -hy:
        return False
    if min(v0z, min(v1z, v2z)) > hz or max(v0z, max(v1z, v2z)) < -hz:
        return False
    # edges
    e0x, e0y, e0z = v1x - v0x, v1y - v0y, v1z - v0z
    e1x, e1y, e1z = v2x - v1x, v2y - v1y, v2z - v1z
    e2x, e2y, e2z = v0x - v2x, v0y - v2y, v0z - v2z
    for k in range(3):
        if k == 0:
            ex, ey, ez = e0x, e0y, e0z
        elif k == 1:
            ex, ey, ez = e1x, e1y, e1z
        else:
            ex, ey, ez = e2x, e2y, e2z
        fx, fy, fz = abs(ex), abs(ey), abs(ez)
        # axis = (1,0,0) x e
        p0 = ez * v0y - ey * v0z
        p1 = ez * v1y - ey * v1z
        p2 = ez * v2y - ey * v2z
        if _axis_sep(p0, p1, p2, fz * hy + fy * hz):
            return False
        # axis = (0,1,0) x e
        p0 = -ez * v0x + ex * v0z
        p1 = -ez * v1x + ex * v1z
        p2 = -ez * v2x + ex * v2z
        if _axis_sep(p0, p1, p2, fz * hx + fx * hz):
            return False
        # axis = (0,0,1) x e
        p0 = ey * v0x - ex * v0y
        p1 = ey * v1x - ex * v1y
        p2 = ey * v2x - ex * v2y
        if _axis_sep(p0, p1, p2, fy * hx + fx * hy):
            return False
    # triangle plane
    nx = e0y * e1z - e0z * e1y
    ny = e0z * e1x - e0x * e1z
    nz = e0x * e1y - e0y * e1x
    d = nx * v0x + ny * v0y + nz * v0z
    r = hx * abs(nx) + hy * abs(ny) + hz * abs(nz)
    if d > r or d < -r:
        return False
    return True


@njit
def voxelize_into(l0, l1, l2, e0, e1, e2, R, tri, out):
    """OR the conservative voxelization of ``tri`` into ``out``."""
    c0 = e0 / R
    c1 = e1 / R
    c2 = e2 / R
    d0 = VOXEL_EPS * c0
    d1 = VOXEL_EPS * c1
    d2 = VOXEL_EPS * c2
    lo0 = min(tri[0, 0], min(tri[1, 0], tri[2, 0]))
    lo1 = min(tri[0, 1], min(tri[1, 1], tri[2, 1]))
    lo2 = min(tri[0, 2], min(tri[1, 2], tri[2, 2]))
    hi0 = max(tri[0, 0], max(tri[1, 0], tri[2, 0]))
    hi1 = max(tri[0, 1], max(tri[1, 1], tri[2, 1]))
    hi2 = max(tri[0, 2], max(tri[1, 2], tri[2, 2]))
    if hi0 < l0 - d0 or lo0 > l0 + e0 + d0:
        return
    if hi1 < l1 - d1 or lo1 > l1 + e1 + d1:
        return
    if hi2 < l2 - d2 or lo2 > l2 + e2 + d2:
        return
    x0 = max(0, min(R - 1, int(np.floor((lo0 - l0 - d0) / c0))))
    x1 = max(0, min(R - 1, int(np.floor((hi0 - l0 + d0) / c0))))
    y0 = max(0, min(R - 1, int(np.floor((lo1 - l1 - d1) / c1))))
    y1 = max(0, min(R - 1, int(np.floor((hi1 - l1 + d1) / c1))))
    z0 = max(0, min(R - 1, int(np.floor((lo2 - l2 - d2) / c2))))
    z1 = max(0, min(R - 1, int(np.floor((hi2 - l2 + d2) / c2))))
    h0 = 0.5 * c0 + d0
    h1 = 0.5 * c1 + d1
    h2 = 0.5 * c2 + d2
    for z in range(z0, z1 + 1):
        cz = l2 + (z + 0.5) * c2
        for y in range(y0, y1 + 1):
            cy = l1 + (y + 0.5) * c1
            for x in range(x0, x1 + 1):
                cx = l0 + (x + 0.5) * c0
                if tri_box_overlap(cx, cy, cz, h0, h1, h2, tri):
                    set_bit(out, x + R * y + R * R * z)


@njit
def voxelize_many_into(lo, hi, R, tris, start, count, out):
    l0, l1, l2, e0, e1, e2 = expand_frame(lo, hi)
    for i in range(start, start + count):
        voxelize_into(l0, l1, l2, e0, e1, e2, R, tris[i], out)


# ---------------------------------------------------------------------------
# grid walk


@njit
def dda_into(l0, l1, l2, e0, e1, e2, R, p0, p1, out):
    """Set every cell the segment p0 -> p1 passes through (Amanatides-Woo walk).

    Start and end cells use the same floor/clamp discretization as the ray
    mask lookup, and the walk only steps along axes that have not yet reached
    the end cell, so it always terminates in the end cell after at most
    3(R-1) steps.
    """
    g00 = R * (p0[0] - l0) / e0
    g01 = R * (p0[1] - l1) / e1
    g02 = R * (p0[2] - l2) / e2
    g10 = R * (p1[0] - l0) / e0
    g11 = R * (p1[1] - l1) / e1
    g12 = R * (p1[2] - l2) / e2
    cx = cell_index(p0[0], l0, e0, R)
    cy = cell_index(p0[1], l1, e1, R)
    cz = cell_index(p0[2], l2, e2, R)
    ex = cell_index(p1[0], l0, e0, R)
    ey = cell_index(p1[1], l1, e1, R)
    ez = cell_index(p1[2], l2, e2, R)
    set_bit(out, cx + R * cy + R * R * cz)
    n = abs(ex - cx) + abs(ey - cy) + abs(ez - cz)
    if n == 0:
        return
    inf = np.inf
    sx = 1 if ex > cx else -1
    sy = 1 if ey > cy else -1
    sz = 1 if ez > cz else -1
    tmx = inf
    tmy = inf
    tmz = inf
    tdx = inf
    tdy = inf
    tdz = inf
    if ex != cx:
        dg = g10 - g00
        tdx = 1.0 / abs(dg)
        tmx = ((cx + 1) - g00) / dg if sx > 0 else (cx - g00) / dg
    if ey != cy:
        dg = g11 - g01
        tdy = 1.0 / abs(dg)
        tmy = ((cy + 1) - g01) / dg if sy > 0 else (cy - g01) / dg
    if ez != cz:
        dg = g12 - g02
        tdz = 1.0 / abs(dg)
        tmz = ((cz + 1) - g02) / dg if sz > 0 else (cz - g02) / dg
    for _ in range(n):
        ax = -1
        best = inf
        if cx != ex:
            ax = 0
            best = tmx
        if cy != ey and (ax < 0 or tmy < best):
            ax = 1
            best = tmy
        if cz != ez and (ax < 0 or tmz < best):
            ax = 2
        if ax == 0:
            cx += sx
            tmx += tdx
        elif ax == 1:
            cy += sy
            tmy += tdy
        else:
            cz += sz
            tmz += tdz
        set_bit(out, cx + R * cy + R * R * cz)


# ---------------------------------------------------------------------------
# value types


class OccupancyMask:
    """An R^3-bit voxel occupancy set packed into uint64 words."""

    __slots__ = ("R", "words")

    def __init__(self, R: int, words=None):
        self.R = check_resolution(R)
        nw = n_words(self.R)
        if words is None:
            self.words = np.zeros(nw, dtype=np.uint64)
        else:
            w = np.array(words, dtype=np.uint64).reshape(-1)
            if len(w) != nw:
                raise ValueError(f"expected {nw} words for R={R}, got {len(w)}")
            if np.any(w & ~full_words(self.R)):
                raise ValueError("bits set beyond R^3")
            self.words = w

    @classmethod
    def full(cls, R: int) -> "OccupancyMask":
        return cls(R, full_words(R))

    @classmethod
    def from_cells(cls, R: int, cells: Iterable[tuple[int, int, int]]) -> "OccupancyMask":
        m = cls(R)
        for x, y, z in cells:
            if not (0 <= x < R and 0 <= y < R and 0 <= z < R):
                raise ValueError(f"cell {(x, y, z)} outside {R}^3 grid")
            set_bit(m.words, x + R * y + R * R * z)
        return m

    @classmethod
    def from_int(cls, R: int, value: int) -> "OccupancyMask":
        nw = n_words(R)
        return cls(R, [(value >> (64 * i)) & 0xFFFFFFFFFFFFFFFF for i in range(nw)])

    def to_int(self) -> int:
        return sum(int(w) << (64 * i) for i, w in enumerate(self.words))

    def popcount(self) -> int:
        return popcount_words(self.words)

    def bit(self, x: int, y: int, z: int) -> bool:
        return bool(get_bit(self.words, x + self.R * y + self.R * self.R * z))

    def cells(self) -> list[tuple[int, int, int]]:
        R = self.R
        v = self.to_int()
        out = []
        while v:
            low = v & -v
            i = low.bit_length() - 1
            out.append((i % R, (i // R) % R, i // (R * R)))
            v ^= low
        return out

    def is_zero(self) -> bool:
        return not np.any(self.words)

    def issuperset(self, other: "OccupancyMask") -> bool:
        return bool(is_superset(self.words, other.words))

    def intersects(self, other: "OccupancyMask") -> bool:
        return mask_and_nonzero(self, other)

    def __and__(self, other):
        return OccupancyMask(self.R, self.words & other.words)

    def __or__(self, other):
        return OccupancyMask(self.R, self.words | other.words)

    def __eq__(self, other):
        if not isinstance(other, OccupancyMask):
            return NotImplemented
        return self.R == other.R and bool(np.array_equal(self.words, other.words))

    def __hash__(self):
        return hash((self.R, self.words.tobytes()))

    def __repr__(self):
        return f"OccupancyMask(R={self.R}, popcount={self.popcount()}, value=0x{self.to_int():x})"

    def to_bytes(self) -> bytes:
        return self.words.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, R: int, data: bytes) -> "OccupancyMask":
        return cls(R, np.frombuffer(data, dtype="<u8", count=n_words(R)))


@dataclass(frozen=True)
class GridFrame:
    """The R^3 grid laid over ``box``; zero-extent axes are widened before use."""

    box: Aabb
    R: int

    def __post_init__(self):
        object.__setattr__(self, "R", check_resolution(self.R))

    @property
    def lower_extent(self) -> tuple[float, ...]:
        return expand_frame(self.box.lower, self.box.upper)

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.lower_extent[:3])

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.lower_extent[3:])

    def cell_box(self, x: int, y: int, z: int) -> Aabb:
        c = self.extent / self.R
        lo = self.lower + np.array([x, y, z]) * c
        return Aabb(lo, lo + c)

    def cell_of(self, p) -> tuple[int, int, int]:
        l0, l1, l2, e0, e1, e2 = self.lower_extent
        p = vec3(p)
        return (cell_index(p[0], l0, e0, self.R), cell_index(p[1], l1, e1, self.R),
                cell_index(p[2], l2, e2, self.R))


def voxelize_triangle(frame: GridFrame, tri) -> OccupancyMask:
    """Conservative voxelization: every cell whose closed box touches the triangle is set."""
    verts = tri.vertices if isinstance(tri, Triangle) else np.asarray(tri, dtype=np.float64).reshape(3, 3)
    m = OccupancyMask(frame.R)
    l0, l1, l2, e0, e1, e2 = frame.lower_extent
    voxelize_into(l0, l1, l2, e0, e1, e2, frame.R, np.ascontiguousarray(verts), m.words)
    return m


def voxelize_triangles(frame: GridFrame, tris: np.ndarray) -> OccupancyMask:
    m = OccupancyMask(frame.R)
    tris = np.ascontiguousarray(tris, dtype=np.float64).reshape(-1, 3, 3)
    voxelize_many_into(frame.box.lower, frame.box.upper, frame.R, tris, 0, len(tris), m.words)
    return m


def dda_ray_cells(frame: GridFrame, p0, p1) -> OccupancyMask:
    m = OccupancyMask(frame.R)
    l0, l1, l2, e0, e1, e2 = frame.lower_extent
    dda_into(l0, l1, l2, e0, e1, e2, frame.R, vec3(p0), vec3(p1), m.words)
    return m


def mask_and_nonzero(a: OccupancyMask, b: OccupancyMask) -> bool:
    if a.R != b.R:
        raise ValueError("masks have different resolutions")
    return bool(and_nonzero(a.words, b.words))
