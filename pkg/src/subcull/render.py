"""Deterministic desk-scale path tracer and intersection-count heatmaps."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bvh import BuildConfig, Bvh, build_bvh
from .compression import build_ray_object_bit_table, compress_masks
from .geometry import Triangle
from .hierarchy import attach_masks
from .raylut import build_ray_mask_lut
from .traversal import CullingMode, CullingTables, PreparedScene, prepare, trace_rays

ALBEDO = 0.7
SKY_ZENITH = np.array([0.45, 0.6, 1.0])
SKY_HORIZON = np.array([1.0, 1.0, 1.0])
HEATMAP_RANGE = 512


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov_deg: float = 40.0

    def __post_init__(self):
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("field of view must lie in (0, 180) degrees")

    @classmethod
    def framing(cls, triangles, fov_deg: float = 40.0) -> "Camera":
        """Look at the scene bounds from a fixed oblique direction."""
        pts = np.array([t.vertices for t in triangles]).reshape(-1, 3)
        lo, hi = pts.min(0), pts.max(0)
        centre = 0.5 * (lo + hi)
        radius = 0.5 * np.linalg.norm(hi - lo)
        view = np.array([1.0, -1.6, 0.9])
        view /= np.linalg.norm(view)
        dist = 0.8 * radius / np.tan(np.radians(fov_deg) / 2)
        return cls(tuple(centre + dist * view), tuple(centre), (0.0, 0.0, 1.0), fov_deg)

    def rays(self, width: int, height: int, jitter: np.ndarray | None = None):
        """One ray per pixel in row-major order; ``jitter`` is (H*W, 2) in [0, 1)."""
        pos = np.asarray(self.position, dtype=np.float64)
        fwd = np.asarray(self.look_at, dtype=np.float64) - pos
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        half_h = np.tan(np.radians(self.fov_deg) / 2)
        half_w = half_h * width / height
        ys, xs = np.mgrid[0:height, 0:width]
        offs = np.full((height * width, 2), 0.5) if jitter is None else jitter
        sx = ((xs.reshape(-1) + offs[:, 0]) / width * 2 - 1) * half_w
        sy = (1 - (ys.reshape(-1) + offs[:, 1]) / height * 2) * half_h
        d = fwd + sx[:, None] * right + sy[:, None] * up
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return np.broadcast_to(pos, d.shape).copy(), d


@dataclass(frozen=True)
class CullingParams:
    R: int = 4
    ray_res: int = 1  # R_ray = ray_res * R
    L: float = 3
    K: int = 256
    b: int = 8

    @property
    def R_ray(self) -> int:
        return self.ray_res * self.R


@dataclass
class Pipeline:
    """A BVH with everything a culling mode needs, plus build timings in ms."""

    bvh: Bvh
    scene: PreparedScene
    mode: CullingMode
    params: CullingParams
    timings: dict = field(default_factory=dict)


def _ms(t0: float) -> float:
    return (time.perf_counter() - t0) * 1e3


def build_pipeline(triangles, mode, params: CullingParams | None = None,
                   bvh: Bvh | None = None) -> Pipeline:
    mode = CullingMode.parse(mode)
    params = params or CullingParams()
    timings = {"bvh_build_ms": 0.0, "mask_build_ms": 0.0, "lut_build_ms": 0.0}
    t0 = time.perf_counter()
    if bvh is None:
        bvh = build_bvh(triangles, BuildConfig(R=params.R))
        timings["bvh_build_ms"] = _ms(t0)
    tables = CullingTables()
    if mode != CullingMode.OFF:
        t0 = time.perf_counter()
        bvh = attach_masks(bvh, L=params.L, R=params.R)
        if mode == CullingMode.COMPRESSED_BIT_TABLE:
            bvh = compress_masks(bvh, K=params.K, b=params.b)
        timings["mask_build_ms"] = _ms(t0)
    t0 = time.perf_counter()
    if mode == CullingMode.RAY_MASK_LUT:
        tables = CullingTables(ray_lut=build_ray_mask_lut(params.R, params.R_ray))
    elif mode == CullingMode.COMPRESSED_BIT_TABLE:
        lut = build_ray_mask_lut(params.R, params.R)
        tables = CullingTables(bit_table=build_ray_object_bit_table(lut, bvh.compression.lut))
    timings["lut_build_ms"] = _ms(t0)
    return Pipeline(bvh, prepare(bvh, mode, tables), mode, params, timings)


@dataclass(frozen=True)
class SceneConfig:
    triangles: tuple
    camera: Camera
    width: int = 480
    height: int = 270
    spp: int = 4
    seed: int = 0
    max_depth: int = 3

    def __post_init__(self):
        if min(self.width, self.height, self.spp, self.max_depth) < 1:
            raise ValueError("width, height, spp and max_depth must be >= 1")


@dataclass
class RenderResult:
    image: np.ndarray  # (H, W, 3) uint8
    radiance: np.ndarray  # (H, W, 3) float64
    node_tests: int
    triangle_tests: int
    render_ms: float

    @property
    def units(self) -> int:
        return self.node_tests + self.triangle_tests


def sky(directions: np.ndarray) -> np.ndarray:
    w = 0.5 * (directions[:, 2:3] + 1.0)
    return (1 - w) * SKY_HORIZON + w * SKY_ZENITH


def _frame(n: np.ndarray):
    """Orthonormal tangents for unit normals (branchless construction)."""
    sign = np.where(n[:, 2] >= 0, 1.0, -1.0)
    a = -1.0 / (sign + n[:, 2])
    b = n[:, 0] * n[:, 1] * a
    t = np.stack([1 + sign * n[:, 0] ** 2 * a, sign * b, -sign * n[:, 0]], axis=1)
    s = np.stack([b, sign + n[:, 1] ** 2 * a, -n[:, 1]], axis=1)
    return t, s


def tonemap(radiance: np.ndarray) -> np.ndarray:
    return np.round(np.clip(radiance, 0, 1) ** (1 / 2.2) * 255).astype(np.uint8)


def render(config: SceneConfig, pipeline: Pipeline) -> RenderResult:
    """Path trace with a diffuse BRDF under a sky gradient.

    All random numbers are drawn up front from the config seed in a fixed
    order, so the image depends only on the seed and never on which rays
    happen to hit or on thread scheduling.
    """
    W, H, spp = config.width, config.height, config.spp
    n_pix = W * H
    rng = np.random.default_rng(config.seed)
    jitter = rng.random((spp, n_pix, 2))
    bounce = rng.random((spp, config.max_depth, n_pix, 2))
    tris = pipeline.bvh.tris
    acc = np.zeros((n_pix, 3))
    nodes = 0
    tri_tests = 0
    t0 = time.perf_counter()
    for s in range(spp):
        o, d = config.camera.rays(W, H, jitter[s])
        alive = np.arange(n_pix)
        throughput = np.ones((n_pix, 3))
        for depth in range(config.max_depth):
            if len(alive) == 0:
                break
            res = trace_rays(pipeline.scene, o, d, 0.0, np.inf)
            nodes += int(res.node_tests.sum())
            tri_tests += int(res.triangle_tests.sum())
            miss = ~res.hit
            acc[alive[miss]] += throughput[miss] * sky(d[miss])
            keep = res.hit
            alive, o, d, throughput = alive[keep], o[keep], d[keep], throughput[keep] * ALBEDO
            t = res.t[keep]
            tri = tris[res.triangle_index[keep]]
            n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
            n /= np.linalg.norm(n, axis=1, keepdims=True)
            n *= np.where(np.einsum("ij,ij->i", n, d) > 0, -1.0, 1.0)[:, None]
            p = o + t[:, None] * d
            u = bounce[s, depth, alive]
            r = np.sqrt(u[:, 0])
            phi = 2 * np.pi * u[:, 1]
            ta, tb = _frame(n)
            d = (r * np.cos(phi))[:, None] * ta + (r * np.sin(phi))[:, None] * tb \
                + np.sqrt(np.maximum(0.0, 1 - u[:, 0]))[:, None] * n
            scale = np.maximum(1.0, np.abs(p).max(axis=1, keepdims=True))
            o = p + 1e-6 * scale * n
    radiance = (acc / spp).reshape(H, W, 3)
    return RenderResult(tonemap(radiance), radiance, nodes, tri_tests, _ms(t0))


def _ramp(x: np.ndarray) -> np.ndarray:
    """Blue -> cyan -> green -> yellow -> red for x in [0, 1]."""
    stops = np.array([[0, 0, 1], [0, 1, 1], [0, 1, 0], [1, 1, 0], [1, 0, 0]], dtype=float)
    pos = np.linspace(0, 1, len(stops))
    return np.stack([np.interp(x, pos, stops[:, c]) for c in range(3)], axis=-1)


def render_heatmap(camera: Camera, width: int, height: int, pipeline: Pipeline,
                   range_max: int = HEATMAP_RANGE) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel units of one primary ray through each pixel centre, colour mapped."""
    if range_max <= 0:
        raise ValueError("range_max must be positive")
    o, d = camera.rays(width, height)
    res = trace_rays(pipeline.scene, o, d)
    counts = (res.node_tests + res.triangle_tests).reshape(height, width)
    img = np.round(_ramp(np.clip(counts / range_max, 0, 1)) * 255).astype(np.uint8)
    return img, counts


def write_ppm(path, image: np.ndarray) -> None:
    h, w, _ = image.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6" or parts[3] != b"255":
        raise ValueError("not an 8-bit binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)


def scene_config(triangles: list[Triangle], width: int = 480, height: int = 270, spp: int = 4,
                 seed: int = 0, max_depth: int = 3, camera: Camera | None = None) -> SceneConfig:
    return SceneConfig(tuple(triangles), camera or Camera.framing(triangles), width, height, spp,
                       seed, max_depth)
