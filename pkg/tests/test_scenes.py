import numpy as np
import pytest

from subcull.bvh import LEAF, build_bvh
from subcull.hierarchy import attach_masks
from subcull.masks import popcount_words
from subcull.scenes import (
    ObjParseError, bundled_obj, gen_cube_array, gen_hair_scene, load_obj, load_scene, parse_obj, write_obj,
)

CUBE = """# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
vn 0 0 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
"""


def test_cube_obj_has_twelve_triangles():
    tris = parse_obj(CUBE)
    assert len(tris) == 12
    assert [t.primitive_id for t in tris] == list(range(12))


def test_pentagon_fans_into_three():
    text = "v 0 0 0\nv 1 0 0\nv 1.5 1 0\nv 0.5 1.5 0\nv -0.5 1 0\nf 1/1/1 2/2/2 3 4 5\n"
    tris = parse_obj(text)
    assert len(tris) == 3
    assert all(np.array_equal(t.v0, [0, 0, 0]) for t in tris)


def test_negative_indices():
    tris = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    np.testing.assert_array_equal(tris[0].v2, [0, 1, 0])


@pytest.mark.parametrize("text,line", [
    ("v 0 0 0\nv 1 x 0\n", 2),
    ("v 0 0\n", 1),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\n\nf 1 2 7\n", 5),
    ("v 0 0 0\nf 1 1\n", 2),
    ("v 0 0 0\n", 0),
])
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(ObjParseError) as err:
        parse_obj(text, "scene.obj")
    assert err.value.line_no == line
    assert f"scene.obj:{line}:" in str(err.value)


def test_write_then_load(tmp_path):
    tris = gen_hair_scene(seed=3, strand_count=4, segments=3)
    write_obj(tmp_path / "h.obj", tris)
    back = load_obj(tmp_path / "h.obj")
    assert len(back) == len(tris)
    for a, b in zip(tris, back):
        np.testing.assert_allclose(a.vertices, b.vertices, rtol=1e-8)


def test_hair_is_deterministic():
    a = gen_hair_scene(seed=5)
    b = gen_hair_scene(seed=5)
    assert all(np.array_equal(x.vertices, y.vertices) for x, y in zip(a, b))
    assert not np.array_equal(a[0].vertices, gen_hair_scene(seed=6)[0].vertices)


def test_single_strand_single_segment():
    assert len(gen_hair_scene(seed=0, strand_count=1, segments=1)) == 2
    with pytest.raises(ValueError):
        gen_hair_scene(strand_count=0)


def test_hair_inside_unit_cube():
    v = np.array([t.vertices for t in gen_hair_scene()])
    assert v.min() >= -0.01 and v.max() <= 1.01


def test_hair_leaf_masks_are_sparse():
    bvh = attach_masks(build_bvh(gen_hair_scene()), R=4, L=3)
    leaf = bvh.child_kind == LEAF
    occupancy = np.mean([popcount_words(m) for m in bvh.masks.masks[leaf]]) / 64
    # measured 0.33 on the default scene
    assert occupancy < 0.6


def test_cube_array_counts():
    assert len(gen_cube_array(n=2)) == 8 * 12
    flat = gen_cube_array(n=1, rotate=False, size=0.5)
    v = np.array([t.vertices for t in flat]).reshape(-1, 3)
    np.testing.assert_allclose(v.min(0), 0.25)
    np.testing.assert_allclose(v.max(0), 0.75)


def test_named_scenes():
    assert bundled_obj().exists()
    assert len(load_scene("knot")) == 3200
    with pytest.raises(OSError):
        load_scene("/no/such/file.obj")
