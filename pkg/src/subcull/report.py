"""Benchmark runs and their CSV report."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .bvh import BuildConfig, build_bvh, masked_sah_cost, sah_cost
from .compression import search_brute, search_fast
from .render import CullingParams, Pipeline, build_pipeline, render, scene_config, write_ppm
from .scenes import load_scene
from .traversal import CullingMode

COLUMNS = ("scene", "mode", "R", "R_ray", "L", "K", "units", "ratio_percent", "node_tests",
           "triangle_tests", "bvh_build_ms", "mask_build_ms", "lut_build_ms", "search_naive_ms",
           "search_fast_ms", "render_ms", "sah", "masked_sah")
TIMING_COLUMNS = tuple(c for c in COLUMNS if c.endswith("_ms"))
MODE_NAMES = {CullingMode.OFF: "off", CullingMode.IDEAL_DDA: "ideal",
              CullingMode.RAY_MASK_LUT: "lut", CullingMode.COMPRESSED_BIT_TABLE: "compressed"}
MIN_SEARCH_BATCH = 10_000


@dataclass
class RunReport:
    scene: str
    mode: str
    R: int
    R_ray: int | str
    L: str
    K: int | str
    units: int
    ratio_percent: float
    node_tests: int
    triangle_tests: int
    bvh_build_ms: float
    mask_build_ms: float
    lut_build_ms: float
    search_naive_ms: float | str
    search_fast_ms: float | str
    render_ms: float
    sah: float
    masked_sah: float | str


def level_label(L) -> str:
    return "inf" if L is None or L == math.inf else str(int(L))


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}" if abs(value) < 1e6 else repr(value)
    return str(value)


def emit_report(reports: list[RunReport], path, include_timings: bool = True) -> None:
    """CSV with one row per run; ``include_timings=False`` blanks the *_ms columns."""
    if not reports:
        raise ValueError("no reports to write")
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in reports:
            row = asdict(r)
            w.writerow(["" if (not include_timings and c in TIMING_COLUMNS) else _fmt(row[c])
                        for c in COLUMNS])


def read_report(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def time_mask_search(pipeline: Pipeline, repeats: int = 3) -> tuple[float, float]:
    """Best-of-``repeats`` ms for brute and fast search over the scene's slot masks.

    The batch is the scene's masks repeated to at least ten thousand queries.
    """
    bvh = pipeline.bvh
    comp = bvh.compression
    occ = bvh.child_kind != 0
    queries = bvh.masks.masks[occ]
    reps = max(1, -(-MIN_SEARCH_BATCH // len(queries)))
    queries = np.ascontiguousarray(np.tile(queries, (reps, 1)))
    search_fast(queries[:1], comp.tables)
    search_brute(queries[:1], comp.lut)
    fast = naive = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        a = search_fast(queries, comp.tables)
        t1 = time.perf_counter()
        b = search_brute(queries, comp.lut)
        t2 = time.perf_counter()
        if not np.array_equal(a, b):
            raise AssertionError("fast mask search disagrees with brute force")
        fast = min(fast, (t1 - t0) * 1e3)
        naive = min(naive, (t2 - t1) * 1e3)
    return naive, fast


@dataclass(frozen=True)
class BenchSettings:
    scenes: tuple[str, ...] = ("cubes", "hair", "knot")
    modes: tuple[str, ...] = ("off", "ideal", "lut", "compressed")
    resolutions: tuple[int, ...] = (4, 6)
    ray_res: tuple[int, ...] = (1, 2)
    L: float = 3
    K: int = 256
    b: int = 8
    width: int = 160
    height: int = 90
    spp: int = 1
    max_depth: int = 2
    seed: int = 0
    level_sweep: tuple[int, ...] = (1, 2, 3, 4, 5)


def _report(scene, pipeline: Pipeline, result, base_units, search=("", "")) -> RunReport:
    p = pipeline.params
    mode = pipeline.mode
    culled = mode != CullingMode.OFF
    compressed = mode == CullingMode.COMPRESSED_BIT_TABLE
    cfg = BuildConfig(R=p.R)
    if mode == CullingMode.RAY_MASK_LUT:
        r_ray = p.R_ray
    elif compressed:
        r_ray = p.R
    else:
        r_ray = ""
    return RunReport(
        scene=scene, mode=MODE_NAMES[mode], R=p.R, R_ray=r_ray,
        L=level_label(p.L) if culled else "", K=p.K if compressed else "",
        units=result.units, ratio_percent=100.0 * result.units / base_units,
        node_tests=result.node_tests, triangle_tests=result.triangle_tests,
        bvh_build_ms=pipeline.timings["bvh_build_ms"], mask_build_ms=pipeline.timings["mask_build_ms"],
        lut_build_ms=pipeline.timings["lut_build_ms"], search_naive_ms=search[0],
        search_fast_ms=search[1], render_ms=result.render_ms, sah=sah_cost(pipeline.bvh, cfg),
        masked_sah=masked_sah_cost(pipeline.bvh, cfg, compressed=compressed) if culled else "")


def run_bench(settings: BenchSettings, image_dir=None, log=print) -> list[RunReport]:
    """Render every scene in every mode; rows for each R, then an L sweep in LUT mode."""
    reports: list[RunReport] = []
    if image_dir is not None:
        Path(image_dir).mkdir(parents=True, exist_ok=True)
    for scene in settings.scenes:
        tris = load_scene(scene, seed=settings.seed)
        cfg = scene_config(tris, settings.width, settings.height, settings.spp, settings.seed,
                           settings.max_depth)
        t0 = time.perf_counter()
        bvh = build_bvh(tris)
        bvh_ms = (time.perf_counter() - t0) * 1e3
        base = build_pipeline(tris, "off", CullingParams(R=settings.resolutions[0]), bvh=bvh)
        base.timings["bvh_build_ms"] = bvh_ms
        off = render(cfg, base)
        label = Path(scene).stem
        if image_dir is not None:
            write_ppm(Path(image_dir) / f"{label}.ppm", off.image)

        def run(mode, params):
            pipe = build_pipeline(tris, mode, params, bvh=bvh)
            pipe.timings["bvh_build_ms"] = bvh_ms
            res = render(cfg, pipe)
            if not np.array_equal(res.image, off.image):
                raise AssertionError(f"{scene}: image differs in mode {mode}")
            search = time_mask_search(pipe) if pipe.mode == CullingMode.COMPRESSED_BIT_TABLE else ("", "")
            reports.append(_report(label, pipe, res, off.units, search))
            log(f"{label:>8} {MODE_NAMES[pipe.mode]:>10} R={params.R} R_ray={params.R_ray} "
                f"L={level_label(params.L)} units={res.units} ({100.0 * res.units / off.units:.1f}%)")

        for R in settings.resolutions:
            base.params = CullingParams(R=R)
            reports.append(_report(label, base, off, off.units))
            for mode in settings.modes:
                m = CullingMode.parse(mode)
                if m == CullingMode.OFF:
                    continue
                rays = settings.ray_res if m == CullingMode.RAY_MASK_LUT else (1,)
                for rr in rays:
                    run(m, CullingParams(R=R, ray_res=rr, L=settings.L, K=settings.K, b=settings.b))
        for L in settings.level_sweep:
            run(CullingMode.RAY_MASK_LUT, CullingParams(R=settings.resolutions[0], ray_res=1, L=L))
    return reports
