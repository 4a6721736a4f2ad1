import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subcull._jit import njit
from subcull.geometry import (
    Aabb, Ray, Triangle, boxes_overlap, intersect_ray_aabb, intersect_ray_triangle,
    ray_triangle_kernel, surface_area, sweep_box_overlap, triangles_to_array,
)

UNIT = Aabb((0, 0, 0), (1, 1, 1))


def test_center_ray_through_box():
    hit = intersect_ray_aabb(Ray((-1, 0.5, 0.5), (1, 0, 0)), UNIT)
    assert hit is not None
    np.testing.assert_array_equal(hit.p0, [0, 0.5, 0.5])
    np.testing.assert_array_equal(hit.p1, [1, 0.5, 0.5])
    assert (hit.t_enter, hit.t_exit) == (1.0, 2.0)


def test_origin_inside_box_starts_at_tmin():
    hit = intersect_ray_aabb(Ray((0.5, 0.5, 0.5), (1, 0, 0)), UNIT)
    assert hit.t_enter == 0.0
    np.testing.assert_array_equal(hit.p0, [0.5, 0.5, 0.5])


def test_ray_above_box_misses():
    assert intersect_ray_aabb(Ray((-1, 2, 0.5), (1, 0, 0)), UNIT) is None


def test_ray_interval_limits_box_hit():
    assert intersect_ray_aabb(Ray((-1, 0.5, 0.5), (1, 0, 0), t_max=0.5), UNIT) is None


def test_invalid_inputs_rejected():
    with pytest.raises(ValueError):
        Ray((0, 0, 0), (0, 0, 0))
    with pytest.raises(ValueError):
        Ray((0, 0, 0), (1, 0, 0), t_min=2, t_max=1)
    with pytest.raises(ValueError):
        Aabb((1, 0, 0), (0, 1, 1))
    with pytest.raises(ValueError):
        triangles_to_array([Triangle((0, 0, 0), (1, 0, 0), (0, 1, 0), 3)] * 2)


def test_hit_points_clamped_into_box(rng):
    for _ in range(2000):
        lo = rng.random(3)
        box = Aabb(lo, lo + rng.random(3))
        o = rng.random(3) * 4 - 2
        ray = Ray(o, rng.random(3) * box.extent + lo - o)
        hit = intersect_ray_aabb(ray, box)
        assert hit is not None
        for p in (hit.p0, hit.p1):
            assert np.all(p >= box.lower) and np.all(p <= box.upper)
        raw = ray.at(hit.t_enter)
        eps = 1e-6 * box.extent.max()
        assert np.all(raw >= box.lower - eps) and np.all(raw <= box.upper + eps)


def test_triangle_axis_ray():
    tri = Triangle((0, 0, 0), (1, 0, 0), (0, 1, 0))
    hit = intersect_ray_triangle(Ray((0.25, 0.25, -1), (0, 0, 1)), tri)
    assert hit.t == 1.0
    assert (hit.u, hit.v) == (0.25, 0.25)
    moved = Triangle((5, 0, 0), (6, 0, 0), (5, 1, 0))
    assert intersect_ray_triangle(Ray((0.25, 0.25, -1), (0, 0, 1)), moved) is None


def test_degenerate_triangle_never_hit():
    tri = Triangle((0, 0, 0), (1, 1, 1), (2, 2, 2))
    assert intersect_ray_triangle(Ray((1, 1, 0), (0, 0, 1)), tri) is None


@njit
def _mt_batch(o, d, tris, out_hit, out_t):
    for i in range(o.shape[0]):
        h, t, u, v = ray_triangle_kernel(o[i], d[i], tris[i], 0.0, np.inf)
        out_hit[i] = h
        out_t[i] = t


def _plucker_oracle(o, d, tris):
    """Signed tetrahedron volumes of the ray line against each edge."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    q = o + d

    def vol(p0, p1, p2, p3):
        return np.einsum("ij,ij->i", np.cross(p1 - p0, p2 - p0), p3 - p0)

    s1 = vol(o, q, a, b)
    s2 = vol(o, q, b, c)
    s3 = vol(o, q, c, a)
    scale = np.linalg.norm(d, axis=1) * np.maximum(
        np.linalg.norm(b - a, axis=1), np.maximum(np.linalg.norm(c - b, axis=1), np.linalg.norm(a - c, axis=1))) ** 2
    grazing = np.minimum(np.abs(s1), np.minimum(np.abs(s2), np.abs(s3))) < 1e-9 * scale
    line_hit = ((s1 > 0) & (s2 > 0) & (s3 > 0)) | ((s1 < 0) & (s2 < 0) & (s3 < 0))
    n = np.cross(b - a, c - a)
    denom = np.einsum("ij,ij->i", n, d)
    t = np.einsum("ij,ij->i", n, a - o) / np.where(denom == 0, 1, denom)
    near_origin = np.abs(t) < 1e-9
    return line_hit & (t >= 0), grazing | near_origin, t


def test_triangle_agrees_with_plucker_oracle(rng):
    n = 100_000
    tris = rng.random((n, 3, 3))
    o = rng.random((n, 3)) * 3 - 1
    d = rng.random((n, 3)) - o
    hit = np.zeros(n, dtype=np.bool_)
    t = np.zeros(n)
    _mt_batch(o, d, tris, hit, t)
    expect, ambiguous, t_oracle = _plucker_oracle(o, d, tris)
    keep = ~ambiguous
    assert np.array_equal(hit[keep], expect[keep])
    both = hit & expect & keep
    np.testing.assert_allclose(t[both], t_oracle[both], rtol=1e-9, atol=1e-12)
    assert both.sum() > 1000


def test_triangle_is_deterministic(rng):
    tri = Triangle(*rng.random((3, 3)))
    ray = Ray((0.3, 0.3, -1), (0.01, 0.02, 1))
    assert intersect_ray_triangle(ray, tri) == intersect_ray_triangle(ray, tri)


def test_sweep_examples():
    assert sweep_box_overlap(UNIT, (0, 0, 0), Aabb((0.5,) * 3, (1.5,) * 3))
    assert sweep_box_overlap(UNIT, (10, 0, 0), Aabb((5, 0, 0), (6, 1, 1)))
    assert not sweep_box_overlap(UNIT, (10, 0, 0), Aabb((5, 3, 0), (6, 4, 1)))


def test_sweep_touching_counts_only_when_not_strict():
    other = Aabb((1, 0, 0), (2, 1, 1))
    assert sweep_box_overlap(UNIT, (0, 0, 0), other)
    assert not sweep_box_overlap(UNIT, (0, 0, 0), other, strict=True)


coord = st.floats(-2, 2, allow_nan=False)


@st.composite
def boxes(draw):
    lo = np.array([draw(coord) for _ in range(3)])
    ext = np.array([draw(st.floats(0, 1.5)) for _ in range(3)])
    return Aabb(lo, lo + ext)


vectors = st.tuples(coord, coord, coord).map(np.array)


@given(boxes(), vectors, boxes())
def test_sweep_symmetric_under_frame_change(m, d, s):
    assert sweep_box_overlap(m, d, s) == sweep_box_overlap(s, -d, m)


@given(boxes(), boxes())
def test_zero_sweep_is_static_overlap(m, s):
    assert sweep_box_overlap(m, np.zeros(3), s) == boxes_overlap(m, s)


def test_sweep_against_sampled_translation(rng):
    steps = np.linspace(0.0, 1.0, 1024)
    for _ in range(10_000):
        mlo = rng.random(3) * 2 - 1
        m = Aabb(mlo, mlo + rng.random(3) * 0.5)
        slo = rng.random(3) * 2 - 1
        s = Aabb(slo, slo + rng.random(3) * 0.5)
        d = rng.standard_normal(3)
        lo = m.lower + steps[:, None] * d
        hi = m.upper + steps[:, None] * d
        sampled = np.any(np.all((lo <= s.upper) & (hi >= s.lower), axis=1))
        if sampled:
            assert sweep_box_overlap(m, d, s)


def test_surface_area():
    assert surface_area((0, 0, 0), (1, 2, 3)) == 22.0
    assert UNIT.surface_area() == 6.0
