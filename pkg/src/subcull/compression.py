"""Object-mask compression with a small dictionary of canonical masks.

Every slot mask is replaced by the index of the tightest dictionary mask
containing it.  The dictionary is sorted by popcount, so "tightest" is simply
the lowest index among the conservative candidates; candidates are found by
AND-ing per-chunk requirement rows and taking the least significant set bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jit import njit, prange
from .bvh import EMPTY, Bvh
from .masks import (
    ALL, ONE, ZERO, OccupancyMask, and_nonzero, full_words, is_superset, lsb_index, n_words,
    popcount_words,
)
from .raylut import RayMaskLut

DEFAULT_K = 256
DEFAULT_CHUNK_BITS = 8


@dataclass(frozen=True, eq=False)
class CompressionLut:
    R: int
    masks: np.ndarray  # (K', n_words(R)) uint64, ascending popcount then numeric value

    def __len__(self) -> int:
        return len(self.masks)

    def mask(self, j: int) -> OccupancyMask:
        return OccupancyMask(self.R, self.masks[j])


@dataclass(frozen=True, eq=False)
class RequirementTables:
    R: int
    b: int
    K: int
    tables: np.ndarray  # (ceil(R^3 / b), 2^b, ceil(K / 64)) uint64

    @property
    def n_chunks(self) -> int:
        return self.tables.shape[0]


@dataclass(frozen=True, eq=False)
class RayObjectBitTable:
    bits: np.ndarray  # (R_ray^6, ceil(K / 64)) uint64

    def bit(self, i: int, j: int) -> bool:
        return bool((int(self.bits[i, j >> 6]) >> (j & 63)) & 1)

    def memory_bytes(self, K: int) -> int:
        return self.bits.shape[0] * K // 8


@dataclass(eq=False)
class CompressedMasks:
    lut: CompressionLut
    tables: RequirementTables
    indices: np.ndarray  # (n_nodes, 4) int32; 0 for empty slots

    def decompressed(self, bvh: Bvh) -> np.ndarray:
        out = self.lut.masks[self.indices]
        out[bvh.child_kind == EMPTY] = 0
        return out


def _numeric_order(masks: np.ndarray) -> list[np.ndarray]:
    # lexsort keys, least significant first: low word ... high word
    return [masks[:, i] for i in range(masks.shape[1])]


def sort_masks(masks: np.ndarray) -> np.ndarray:
    """Sort rows by popcount, ties by numeric value (high word most significant)."""
    pc = np.array([popcount_words(m) for m in masks], dtype=np.int64)
    order = np.lexsort(_numeric_order(masks) + [pc])
    return masks[order]


def mask_importance(bvh: Bvh) -> tuple[np.ndarray, np.ndarray]:
    """Distinct slot masks and their summed importance SA(N) * popcount / R^3."""
    if bvh.masks is None:
        raise ValueError("masks must be attached first")
    R = bvh.masks.R
    occ = bvh.child_kind != EMPTY
    m = bvh.masks.masks[occ]
    ext = (bvh.child_upper - bvh.child_lower)[occ]
    sa = 2.0 * (ext[:, 0] * ext[:, 1] + ext[:, 0] * ext[:, 2] + ext[:, 1] * ext[:, 2])
    pc = np.array([popcount_words(w) for w in m], dtype=np.float64)
    uniq, inverse = np.unique(m, axis=0, return_inverse=True)
    imp = np.zeros(len(uniq))
    np.add.at(imp, inverse.reshape(-1), sa * pc / R ** 3)
    return uniq, imp


def select_compression_lut(bvh: Bvh, K: int = DEFAULT_K) -> CompressionLut:
    """Keep the K-1 most important distinct masks plus the all-ones fallback."""
    if K < 1:
        raise ValueError("K must be >= 1")
    R = bvh.masks.R
    full = full_words(R)
    uniq, imp = mask_importance(bvh)
    keep = ~np.all(uniq == full, axis=1)
    uniq, imp = uniq[keep], imp[keep]
    # descending importance; ties by ascending numeric value
    order = np.lexsort(_numeric_order(uniq) + [-imp])
    chosen = uniq[order[:K - 1]]
    lut = np.concatenate([chosen, full[None, :]], axis=0)
    return CompressionLut(R, sort_masks(lut))


@njit
def extract_bits(words, pos, b):
    w = pos >> 6
    off = pos & 63
    v = words[w] >> np.uint64(off)
    if off + b > 64 and w + 1 < words.shape[0]:
        v |= words[w + 1] << np.uint64(64 - off)
    return int(v & ((ONE << np.uint64(b)) - ONE))


@njit
def _chunk_values(masks, pos, b, out):
    for j in range(masks.shape[0]):
        out[j] = extract_bits(masks[j], pos, b)


def build_requirement_tables(lut: CompressionLut, R: int | None = None,
                             b: int = DEFAULT_CHUNK_BITS) -> RequirementTables:
    R = lut.R if R is None else R
    if not 1 <= b <= 16:
        raise ValueError("chunk width must be in [1, 16]")
    K = len(lut)
    nbits = R ** 3
    n_chunks = -(-nbits // b)
    kw = -(-K // 64)
    patterns = np.arange(1 << b, dtype=np.int64)
    tables = np.zeros((n_chunks, 1 << b, kw), dtype=np.uint64)
    chunk = np.empty(K, dtype=np.int64)
    for i in range(n_chunks):
        _chunk_values(lut.masks, i * b, b, chunk)
        ok = (patterns[:, None] & ~chunk[None, :]) == 0
        packed = np.packbits(ok, axis=1, bitorder="little")
        padded = np.zeros((1 << b, kw * 8), dtype=np.uint8)
        padded[:, :packed.shape[1]] = packed
        tables[i] = padded.view("<u8").astype(np.uint64)
    return RequirementTables(R, b, K, tables)


@njit
def _search_fast(masks, tables, b, out):
    n_chunks = tables.shape[0]
    kw = tables.shape[2]
    acc = np.empty(kw, dtype=np.uint64)
    for m in range(masks.shape[0]):
        words = masks[m]
        p = extract_bits(words, 0, b)
        for k in range(kw):
            acc[k] = tables[0, p, k]
        for i in range(1, n_chunks):
            p = extract_bits(words, i * b, b)
            if p == 0:
                continue  # empty chunk pattern requires nothing
            for k in range(kw):
                acc[k] &= tables[i, p, k]
        out[m] = lsb_index(acc)


@njit
def _search_brute(masks, lut, out):
    # full scan: every superset is a candidate, the smallest popcount wins,
    # ties go to the earlier dictionary slot
    for m in range(masks.shape[0]):
        best = -1
        best_pc = 1 << 30
        for j in range(lut.shape[0]):
            if is_superset(lut[j], masks[m]):
                pc = popcount_words(lut[j])
                if pc < best_pc:
                    best = j
                    best_pc = pc
        out[m] = best


def search_fast(masks: np.ndarray, tables: RequirementTables) -> np.ndarray:
    masks = np.ascontiguousarray(masks, dtype=np.uint64).reshape(-1, n_words(tables.R))
    out = np.empty(len(masks), dtype=np.int64)
    _search_fast(masks, tables.tables, tables.b, out)
    return out


def search_brute(masks: np.ndarray, lut: CompressionLut) -> np.ndarray:
    """Reference search by exhaustive scan; does not rely on the dictionary order."""
    masks = np.ascontiguousarray(masks, dtype=np.uint64).reshape(-1, n_words(lut.R))
    out = np.empty(len(masks), dtype=np.int64)
    _search_brute(masks, lut.masks, out)
    return out


def index_of_optimal_mask(mask: OccupancyMask, tables: RequirementTables, R: int | None = None,
                          b: int | None = None) -> int:
    if (R is not None and R != tables.R) or (b is not None and b != tables.b):
        raise ValueError("tables were built for different R or b")
    idx = int(search_fast(mask.words, tables)[0])
    if idx < 0:
        raise ValueError("no conservative mask in the dictionary")
    return idx


def compress_masks(bvh: Bvh, K: int = DEFAULT_K, b: int = DEFAULT_CHUNK_BITS,
                   lut: CompressionLut | None = None) -> Bvh:
    """Attach dictionary indices for every slot mask."""
    from dataclasses import replace

    if bvh.masks is None:
        raise ValueError("masks must be attached first")
    lut = lut if lut is not None else select_compression_lut(bvh, K)
    tables = build_requirement_tables(lut, bvh.masks.R, b)
    n = bvh.n_nodes
    idx = search_fast(bvh.masks.masks.reshape(n * 4, -1), tables).reshape(n, 4)
    idx[bvh.child_kind == EMPTY] = 0
    if np.any(idx < 0):
        raise RuntimeError("dictionary is missing a conservative fallback")
    return replace(bvh, compression=CompressedMasks(lut, tables, idx.astype(np.int32)))


@njit(parallel=True)
def _bit_table(ray_masks, comp_masks, out):
    for i in prange(ray_masks.shape[0]):
        for j in range(comp_masks.shape[0]):
            if and_nonzero(ray_masks[i], comp_masks[j]):
                out[i, j >> 6] |= ONE << np.uint64(j & 63)


def build_ray_object_bit_table(ray_lut: RayMaskLut, comp_lut: CompressionLut) -> RayObjectBitTable:
    if ray_lut.R != comp_lut.R:
        raise ValueError("ray LUT and compression LUT use different R")
    kw = -(-len(comp_lut) // 64)
    out = np.zeros((ray_lut.entries.shape[0], kw), dtype=np.uint64)
    _bit_table(ray_lut.entries, comp_lut.masks, out)
    return RayObjectBitTable(out)


__all__ = [
    "ALL", "ZERO", "CompressedMasks", "CompressionLut", "RayObjectBitTable", "RequirementTables",
    "build_ray_object_bit_table", "build_requirement_tables", "compress_masks", "index_of_optimal_mask",
    "search_brute", "search_fast", "select_compression_lut", "sort_masks",
]
