import math

import numpy as np
import pytest

from conftest import random_rays, random_triangles
from subcull.bvh import (
    EMPTY, HEADER, INNER, LEAF, REF_EMPTY, REF_LEAF, BuildConfig, EmptySceneError, build_bvh,
    dump_bvh, masked_sah_cost, node_size, parse_nodes, sah_cost, serialize_nodes,
)
from subcull.compression import compress_masks
from subcull.geometry import Triangle, surface_area
from subcull.hierarchy import MaskAttachment, attach_masks
from subcull.masks import full_words
from subcull.traversal import prepare, trace_rays


@pytest.fixture(scope="module")
def scene1k():
    rng = np.random.default_rng(7)
    tris = random_triangles(rng, 1000)
    return tris, build_bvh(tris)


def test_single_triangle():
    bvh = build_bvh([Triangle((0, 0, 0), (1, 0, 0), (0, 1, 0))])
    assert bvh.n_nodes == 1
    assert bvh.child_kind.tolist() == [[LEAF, EMPTY, EMPTY, EMPTY]]
    assert sah_cost(bvh) == 1.0


def test_four_separated_triangles_fan_out():
    base = np.array([[0, 0, 0], [0.1, 0, 0], [0, 0.1, 0]])
    tris = [base + [5.0 * i, 0, 0] for i in range(4)]
    bvh = build_bvh(tris, BuildConfig(max_leaf_tris=1))
    assert bvh.n_nodes == 1
    assert bvh.child_kind.tolist() == [[LEAF] * 4]
    assert sorted(bvh.child_count[0].tolist()) == [1, 1, 1, 1]


def test_empty_scene_rejected():
    with pytest.raises(EmptySceneError, match="empty scene"):
        build_bvh([])


def test_config_validation():
    for bad in (dict(bins=1), dict(max_leaf_tris=0), dict(C_T=0), dict(L=0), dict(L=1.5), dict(width=8)):
        with pytest.raises(ValueError):
            BuildConfig(**bad)


def test_structure_invariants(scene1k):
    tris, bvh = scene1k
    seen = np.zeros(bvh.n_tris, dtype=np.int64)
    reached = np.zeros(bvh.n_nodes, dtype=bool)
    reached[0] = True
    for n, s in bvh.slots():
        lo, hi = bvh.child_lower[n, s], bvh.child_upper[n, s]
        assert np.all(lo.astype(np.float32) == lo) and np.all(hi.astype(np.float32) == hi)
        if bvh.child_kind[n, s] == LEAF:
            a, c = bvh.child_index[n, s], bvh.child_count[n, s]
            assert 1 <= c <= 4
            seen[a:a + c] += 1
            t = bvh.tris[a:a + c]
            assert np.all(t.min(axis=1) >= lo) and np.all(t.max(axis=1) <= hi)
        else:
            child = bvh.child_index[n, s]
            assert child > n
            reached[child] = True
            occ = bvh.child_kind[child] != EMPTY
            assert np.all(bvh.child_lower[child][occ] >= lo)
            assert np.all(bvh.child_upper[child][occ] <= hi)
    assert np.all(seen == 1)
    assert reached.all()
    assert bvh.n_nodes <= 2 * len(tris)
    assert bvh.depth() <= 64
    assert sorted(bvh.prim_ids.tolist()) == list(range(len(tris)))


def test_build_is_deterministic(scene1k):
    tris, bvh = scene1k
    again = build_bvh(tris)
    assert np.array_equal(again.child_index, bvh.child_index)
    assert np.array_equal(again.tris, bvh.tris)


def test_coincident_centroids_still_split():
    tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
    bvh = build_bvh([tri] * 40)
    assert bvh.child_count[bvh.child_kind == LEAF].max() <= 4
    assert bvh.n_tris == 40


def test_unculled_traversal_matches_brute_force(rng, scene1k):
    tris, bvh = scene1k
    o, d = random_rays(rng, 10_000)
    res = trace_rays(prepare(bvh, "off"), o, d)
    # brute force over all triangles (vectorized Moller-Trumbore per triangle)
    best_t = np.full(len(o), np.inf)
    best_id = np.full(len(o), -1)
    for pid, tri in enumerate(np.asarray(tris)):
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        p = np.cross(d, e2)
        det = p @ e1
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            s = o - tri[0]
            u = np.einsum("ij,ij->i", s, p) * inv
            q = np.cross(s, e1)
            v = np.einsum("ij,ij->i", d, q) * inv
            t = (q @ e2) * inv
        ok = (det != 0) & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t < best_t)
        best_t[ok] = t[ok]
        best_id[ok] = pid
    hit = best_id >= 0
    assert np.array_equal(res.hit, hit)
    assert np.array_equal(res.primitive_id[hit], best_id[hit])
    np.testing.assert_allclose(res.t[hit], best_t[hit], rtol=1e-12)


def _sah_by_recursion(bvh, config):
    """Walk from the root and sum every child slot's term."""
    def area(n, s):
        return surface_area(bvh.child_lower[n, s], bvh.child_upper[n, s])

    def walk(node):
        total = 0.0
        for s in range(4):
            k = bvh.child_kind[node, s]
            if k == INNER:
                total += config.C_T * area(node, s) + walk(bvh.child_index[node, s])
            elif k == LEAF:
                total += config.C_I * area(node, s) * bvh.child_count[node, s]
        return total

    return walk(0) / bvh.root_box.surface_area()


def test_sah_matches_recursive_sum(rng):
    tris = random_triangles(rng, 100)
    cfg = BuildConfig(C_T=1.5, C_I=0.7)
    bvh = build_bvh(tris, cfg)
    assert sah_cost(bvh, cfg) == pytest.approx(_sah_by_recursion(bvh, cfg), rel=1e-12)


def test_sah_scale_invariance(rng):
    tris = random_triangles(rng, 300)
    a = build_bvh(tris)
    b = build_bvh(tris * 2.0)
    assert sah_cost(b) == pytest.approx(sah_cost(a), rel=1e-9)


def _with_constant_masks(bvh, R, popcount):
    words = np.zeros((bvh.n_nodes, 4, len(full_words(R))), dtype=np.uint64)
    value = (1 << popcount) - 1
    for w in range(words.shape[2]):
        words[:, :, w] = np.uint64((value >> (64 * w)) & 0xFFFFFFFFFFFFFFFF)
    return bvh.with_masks(MaskAttachment(R, math.inf, words, np.ones((bvh.n_nodes, 4), bool)))


def test_masked_sah_full_and_half(scene1k):
    _, bvh = scene1k
    for R in (4, 6):
        full = _with_constant_masks(bvh, R, R ** 3)
        assert masked_sah_cost(full) == sah_cost(bvh)
        half = _with_constant_masks(bvh, R, R ** 3 // 2)
        assert masked_sah_cost(half) == pytest.approx(sah_cost(bvh) / 2, rel=1e-12)


def test_masked_sah_bounded(scene1k):
    _, bvh = scene1k
    for L in (1, None):
        m = compress_masks(attach_masks(bvh, L=L, R=4))
        assert masked_sah_cost(m) <= masked_sah_cost(m, compressed=True) <= sah_cost(bvh)
    with pytest.raises(ValueError):
        masked_sah_cost(bvh)


def test_node_sizes():
    assert node_size(4, with_masks=False) == 112
    assert node_size(4) == 144
    assert node_size(4, compressed=True) == 116
    assert node_size(6) == 112 + 4 * 32


def test_serialized_stream_lengths(scene1k):
    _, bvh = scene1k
    n = bvh.n_nodes
    m = compress_masks(attach_masks(bvh, R=4))
    assert len(serialize_nodes(bvh, with_masks=False)) == 112 * n + HEADER.size
    assert len(serialize_nodes(m)) == 144 * n + HEADER.size
    assert len(serialize_nodes(m, compressed=True)) == 116 * n + HEADER.size
    with pytest.raises(ValueError):
        serialize_nodes(attach_masks(bvh, R=4), compressed=True)
    with pytest.raises(ValueError):
        serialize_nodes(bvh)


def test_node_dump_roundtrip(scene1k, tmp_path):
    _, bvh = scene1k
    m = compress_masks(attach_masks(bvh, R=4))
    for compressed in (False, True):
        dump = parse_nodes(serialize_nodes(m, compressed=compressed))
        occ = bvh.child_kind != EMPTY
        assert np.array_equal(dump.child_lower[occ], bvh.child_lower[occ])
        assert np.all(np.isinf(dump.child_lower[~occ]))
        refs = dump.refs
        assert np.all(refs[bvh.child_kind == EMPTY] == REF_EMPTY)
        inner = bvh.child_kind == INNER
        assert np.array_equal(refs[inner], bvh.child_index[inner])
        leaf = bvh.child_kind == LEAF
        assert np.all(refs[leaf] & REF_LEAF)
        assert np.array_equal(refs[leaf] & 0x07FFFFFF, bvh.child_index[leaf])
        assert np.array_equal(((refs[leaf] >> 27) & 0xF) + 1, bvh.child_count[leaf])
        if compressed:
            assert np.array_equal(dump.indices, m.compression.indices)
        else:
            assert np.array_equal(dump.masks, m.masks.masks)
    size = dump_bvh(m, tmp_path / "scene.bvh", compressed=True)
    assert size == (tmp_path / "scene.bvh").stat().st_size
