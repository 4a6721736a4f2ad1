"""Six-dimensional ray-mask lookup table.

A box is mapped onto the unit cube and split into an R_ray^3 grid of key
cells.  The entry for a (begin cell, end cell) pair holds every mask cell
(R^3 grid) that any segment starting in the begin cell and ending in the end
cell can pass through, i.e. the cells swept by the begin cell box moving to
the end cell.  One table therefore serves every box in the BVH.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._jit import njit, prange
from .geometry import Aabb, sweep_overlap_kernel, vec3
from .masks import OccupancyMask, cell_index, check_resolution, expand_frame, n_words, set_bit

LUT_MAGIC = b"SCRL"
LUT_VERSION = 1
_HEADER = struct.Struct("<4sHBBI")


@njit(parallel=True)
def _build_entries(R, Rr, entries):
    s = Rr // R
    nk = Rr * Rr * Rr
    for ia in prange(nk):
        ax = ia % Rr
        ay = (ia // Rr) % Rr
        az = ia // (Rr * Rr)
        mlo = np.empty(3)
        mhi = np.empty(3)
        disp = np.empty(3)
        slo = np.empty(3)
        shi = np.empty(3)
        mlo[0], mlo[1], mlo[2] = ax, ay, az
        mhi[0], mhi[1], mhi[2] = ax + 1, ay + 1, az + 1
        for ib in range(ia, nk):
            bx = ib % Rr
            by = (ib // Rr) % Rr
            bz = ib // (Rr * Rr)
            disp[0], disp[1], disp[2] = bx - ax, by - ay, bz - az
            row = ia + nk * ib
            # only mask cells inside the bounding box of both key cells can be swept
            for mz in range(min(az, bz) // s, max(az, bz) // s + 1):
                slo[2] = mz * s
                shi[2] = (mz + 1) * s
                for my in range(min(ay, by) // s, max(ay, by) // s + 1):
                    slo[1] = my * s
                    shi[1] = (my + 1) * s
                    for mx in range(min(ax, bx) // s, max(ax, bx) // s + 1):
                        slo[0] = mx * s
                        shi[0] = (mx + 1) * s
                        if sweep_overlap_kernel(mlo, mhi, disp, slo, shi, True):
                            set_bit(entries[row], mx + R * my + R * R * mz)
            if ib != ia:
                entries[ib + nk * ia, :] = entries[row, :]


@njit
def lut_linear_index(lo, hi, p0, p1, Rr):
    """Discretize entry/exit points in box [lo, hi] into the table's linear index."""
    l0, l1, l2, e0, e1, e2 = expand_frame(lo, hi)
    b0 = cell_index(p0[0], l0, e0, Rr)
    b1 = cell_index(p0[1], l1, e1, Rr)
    b2 = cell_index(p0[2], l2, e2, Rr)
    f0 = cell_index(p1[0], l0, e0, Rr)
    f1 = cell_index(p1[1], l1, e1, Rr)
    f2 = cell_index(p1[2], l2, e2, Rr)
    return b0 + Rr * (b1 + Rr * (b2 + Rr * (f0 + Rr * (f1 + Rr * f2))))


def linear_index(beg, end, R_ray: int) -> int:
    b0, b1, b2 = beg
    f0, f1, f2 = end
    return b0 + R_ray * (b1 + R_ray * (b2 + R_ray * (f0 + R_ray * (f1 + R_ray * f2))))


@dataclass(frozen=True, eq=False)
class RayMaskLut:
    R: int
    R_ray: int
    entries: np.ndarray  # (R_ray**6, n_words(R)) uint64

    @property
    def n_entries(self) -> int:
        return self.R_ray ** 6

    def memory_bytes(self) -> int:
        return lut_memory_bytes(self)

    def entry(self, beg, end) -> OccupancyMask:
        return OccupancyMask(self.R, self.entries[linear_index(beg, end, self.R_ray)])

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(_HEADER.pack(LUT_MAGIC, LUT_VERSION, self.R, self.R_ray, n_words(self.R)))
            f.write(self.entries.astype("<u8").tobytes())

    @classmethod
    def load(cls, path) -> "RayMaskLut":
        data = Path(path).read_bytes()
        magic, version, R, R_ray, nw = _HEADER.unpack_from(data)
        if magic != LUT_MAGIC or version != LUT_VERSION:
            raise ValueError(f"{path}: not a ray-mask LUT dump")
        if nw != n_words(R):
            raise ValueError(f"{path}: word count {nw} does not match R={R}")
        n = R_ray ** 6
        body = np.frombuffer(data, dtype="<u8", offset=_HEADER.size, count=n * nw)
        return cls(R, R_ray, body.astype(np.uint64).reshape(n, nw))


def check_ray_resolution(R: int, R_ray: int) -> int:
    R_ray = int(R_ray)
    if R_ray < R or R_ray % R:
        raise ValueError(f"R_ray must be a multiple of R={R}, got {R_ray}")
    return R_ray


def build_ray_mask_lut(R: int, R_ray: int) -> RayMaskLut:
    R = check_resolution(R)
    R_ray = check_ray_resolution(R, R_ray)
    entries = np.zeros((R_ray ** 6, n_words(R)), dtype=np.uint64)
    _build_entries(R, R_ray, entries)
    return RayMaskLut(R, R_ray, entries)


def lookup_ray_mask(lut: RayMaskLut, box: Aabb, p0, p1) -> OccupancyMask:
    i = lut_linear_index(box.lower, box.upper, vec3(p0), vec3(p1), lut.R_ray)
    return OccupancyMask(lut.R, lut.entries[i])


def lut_memory_bytes(lut: RayMaskLut) -> int:
    return lut.R_ray ** 6 * n_words(lut.R) * 8
