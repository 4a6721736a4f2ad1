import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_triangles
from subcull.bvh import EMPTY, INNER, LEAF, BuildConfig, build_bvh
from subcull.geometry import Aabb, Triangle
from subcull.hierarchy import (
    attach_masks, build_filling_pattern_table, direct_slot_mask, fill_by_approximated_occupancy,
    level_value, projection_ranges,
)
from subcull.masks import GridFrame, OccupancyMask, popcount_words, voxelize_triangles


@pytest.fixture(scope="module")
def table4():
    return build_filling_pattern_table(4)


@pytest.fixture(scope="module")
def table6():
    return build_filling_pattern_table(6)


@pytest.fixture(scope="module")
def bvh_small():
    rng = np.random.default_rng(3)
    return build_bvh(random_triangles(rng, 100, spread=0.05))


@pytest.fixture(scope="module")
def bvh_mid():
    rng = np.random.default_rng(4)
    return build_bvh(random_triangles(rng, 3000))


def test_pattern_examples(table4):
    assert table4.pattern((0, 0, 0), (3, 3, 3)).popcount() == 64
    assert table4.pattern((1, 1, 1), (1, 1, 1)).cells() == [(1, 1, 1)]
    assert sorted(table4.pattern((0, 0, 0), (1, 1, 0)).cells()) == [(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 0)]


@given(st.lists(st.integers(0, 5), min_size=6, max_size=6))
def test_patterns_are_filled_boxes(table6, corners):
    lo = [min(corners[i], corners[i + 3]) for i in range(3)]
    hi = [max(corners[i], corners[i + 3]) for i in range(3)]
    expect = {(x, y, z) for x in range(lo[0], hi[0] + 1) for y in range(lo[1], hi[1] + 1)
              for z in range(lo[2], hi[2] + 1)}
    assert set(table6.pattern(lo, hi).cells()) == expect


def test_identity_projection(table4, rng):
    box = Aabb((0.1, 0.2, 0.3), (1.1, 0.9, 2.0))
    for _ in range(50):
        child = OccupancyMask.from_int(4, int(rng.integers(0, 2 ** 63)) | int(rng.integers(0, 2)) << 63)
        start = OccupancyMask.from_int(4, int(rng.integers(0, 2 ** 20)))
        out = fill_by_approximated_occupancy(start, box, child, box, 4, table4)
        assert out == start | child


def test_straddling_cell_fills_two_then_four(table4):
    parent = Aabb((0, 0, 0), (4, 4, 4))
    # child cells are half a parent cell wide; shifting by a quarter makes them straddle
    one_axis = Aabb((0.25, 0, 0), (2.25, 2, 2))
    cell = OccupancyMask.from_cells(4, [(1, 0, 0)])
    out = fill_by_approximated_occupancy(OccupancyMask(4), parent, cell, one_axis, 4, table4)
    assert sorted(out.cells()) == [(0, 0, 0), (1, 0, 0)]
    two_axes = Aabb((0.25, 0.25, 0), (2.25, 2.25, 2))
    cell = OccupancyMask.from_cells(4, [(1, 1, 0)])
    out = fill_by_approximated_occupancy(OccupancyMask(4), parent, cell, two_axes, 4, table4)
    assert sorted(out.cells()) == [(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 0)]


@st.composite
def nested_boxes(draw):
    f = st.floats(0.0, 1.0, allow_nan=False)
    plo = np.array([draw(st.floats(-3, 3)) for _ in range(3)])
    pext = np.array([draw(st.floats(0.1, 4)) for _ in range(3)])
    a = np.array([draw(f) for _ in range(3)])
    b = np.array([draw(f) for _ in range(3)])
    clo = plo + np.minimum(a, b) * pext
    chi = plo + np.maximum(a, b) * pext
    return Aabb(plo, plo + pext), Aabb(clo, chi)


@given(nested_boxes(), st.integers(0, 2 ** 64 - 1), st.integers(0, 2 ** 64 - 1))
def test_fill_is_or_and_grows(table4, boxes, child_bits, start_bits):
    parent, child = boxes
    start = OccupancyMask.from_int(4, start_bits)
    out = fill_by_approximated_occupancy(start, parent, OccupancyMask.from_int(4, child_bits), child, 4, table4)
    assert out.issuperset(start)
    assert out.popcount() >= start.popcount()


@given(nested_boxes())
def test_small_child_cells_cover_one_to_eight_parent_cells(boxes):
    parent, child = boxes
    mins, maxs = projection_ranges(parent, child, 4)
    assert np.all(maxs >= mins)
    p_cell = GridFrame(parent, 4).extent / 4
    c_cell = GridFrame(child, 4).extent / 4
    for a in range(3):
        if c_cell[a] < p_cell[a] * (1 - 1e-6):
            assert np.all(maxs[a] - mins[a] <= 1)


def test_projection_covers_child_cells(rng, table4):
    # every point inside a set child cell lands in a set parent cell
    for _ in range(200):
        plo = rng.standard_normal(3)
        parent = Aabb(plo, plo + 0.5 + rng.random(3))
        a, b = rng.random((2, 3))
        child = Aabb(plo + np.minimum(a, b) * parent.extent, plo + np.maximum(a, b) * parent.extent)
        cm = OccupancyMask.from_int(4, int(rng.integers(0, 2 ** 63)))
        out = fill_by_approximated_occupancy(OccupancyMask(4), parent, cm, child, 4, table4)
        cframe, pframe = GridFrame(child, 4), GridFrame(parent, 4)
        for c in cm.cells():
            cb = cframe.cell_box(*c)
            for p in cb.lower + rng.random((20, 3)) * cb.extent:
                assert out.bit(*pframe.cell_of(p))


def test_level_values():
    assert level_value(None) == level_value(math.inf) > 1000
    assert level_value(3) == 3
    with pytest.raises(ValueError):
        level_value(0)


def test_single_leaf_mask_is_exact():
    tri = Triangle((0, 0, 0), (1, 0.2, 0.1), (0.3, 1, 0.5))
    bvh = build_bvh([tri])
    for L in (1, 2, None):
        m = attach_masks(bvh, L=L, R=4)
        expect = voxelize_triangles(GridFrame(bvh.slot_box(0, 0), 4), tri.vertices)
        assert m.masks.mask(0, 0) == expect
        assert m.masks.exact[0, 0]


@pytest.mark.parametrize("R", [4, 6])
def test_infinite_level_equals_direct_voxelization(bvh_small, R):
    m = attach_masks(bvh_small, L=None, R=R)
    for n, s in bvh_small.slots():
        assert m.masks.mask(n, s) == direct_slot_mask(bvh_small, n, s, R)
    assert m.masks.exact[bvh_small.child_kind != EMPTY].all()


@pytest.mark.parametrize("R", [4, 6])
def test_finite_levels_contain_infinite(bvh_mid, R):
    table = build_filling_pattern_table(R)
    exact = attach_masks(bvh_mid, L=None, R=R, table=table).masks.masks
    occ = bvh_mid.child_kind != EMPTY
    for L in (1, 2, 3, 4, 5):
        approx = attach_masks(bvh_mid, L=L, R=R, table=table).masks.masks
        assert np.all(exact & ~approx == 0), f"L={L}"
        pc_a = np.array([popcount_words(w) for w in approx[occ]])
        pc_e = np.array([popcount_words(w) for w in exact[occ]])
        assert np.all(pc_a >= pc_e)


def test_leaf_slots_exact_at_every_level(bvh_mid):
    m = attach_masks(bvh_mid, L=1, R=4)
    leaf = bvh_mid.child_kind == LEAF
    assert m.masks.exact[leaf].all()
    assert not m.masks.exact[bvh_mid.child_kind == INNER].all()


def test_default_level_comes_from_config(bvh_small):
    two = build_bvh(bvh_small.tris, BuildConfig(L=2))
    assert attach_masks(two).masks.level == 2
    assert attach_masks(two, L=math.inf).masks.level == math.inf


def test_table_resolution_mismatch(bvh_small, table4):
    with pytest.raises(ValueError):
        attach_masks(bvh_small, R=6, table=table4)
