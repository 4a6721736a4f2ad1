"""Command-line entry point: ``subcull {render,heatmap,bench,gen-hair,dump-bvh}``."""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from ._jit import set_num_threads
from .bvh import dump_bvh
from .render import (
    HEATMAP_RANGE, CullingParams, build_pipeline, render, render_heatmap, scene_config, write_ppm,
)
from .report import BenchSettings, _report, emit_report, run_bench
from .scenes import gen_hair_scene, load_scene, write_obj
from .traversal import CullingMode

MODES = ("off", "ideal", "lut", "compressed")


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("width and height must be >= 1")
    return w, h


def _level(text: str) -> float:
    if text.lower() in ("inf", "infinity", "∞"):
        return math.inf
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("level must be >= 1 or 'inf'")
    return value


def _ray_res(text: str) -> int:
    table = {"1x": 1, "2x": 2}
    if text not in table:
        raise argparse.ArgumentTypeError("ray resolution must be 1x or 2x")
    return table[text]


def _culling_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--res", type=int, default=4, help="mask resolution R per axis (default 4)")
    p.add_argument("--ray-res", type=_ray_res, default=1, help="ray mask LUT resolution, 1x or 2x R")
    p.add_argument("--level", type=_level, default=3, help="mask approximation level L, or 'inf'")
    p.add_argument("--lut-size", type=int, default=256, help="compression LUT size K")
    p.add_argument("--chunk-bits", type=int, default=8, help="requirement table chunk width b")


def _scene_flags(p: argparse.ArgumentParser, multiple: bool = False) -> None:
    if multiple:
        p.add_argument("--scene", action="append", help="cubes, hair, knot or an OBJ path (repeatable)")
    else:
        p.add_argument("--scene", default="hair", help="cubes, hair, knot or an OBJ path")
    p.add_argument("--seed", type=int, default=0)


def _params(args) -> CullingParams:
    return CullingParams(R=args.res, ray_res=args.ray_res, L=args.level, K=args.lut_size, b=args.chunk_bits)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subcull", description="BVH traversal with subspace culling")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for tracing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="path trace a scene to a PPM image")
    _scene_flags(p)
    _culling_flags(p)
    p.add_argument("--mode", choices=MODES, default="lut")
    p.add_argument("--spp", type=int, default=4)
    p.add_argument("--depth", type=int, default=3, help="maximum bounces")
    p.add_argument("--size", type=_size, default=(480, 270), help="image size WxH")
    p.add_argument("--out", default="render.ppm")
    p.add_argument("--report", help="write a one-row CSV report here")

    p = sub.add_parser("heatmap", help="per-pixel intersection counts of primary rays")
    _scene_flags(p)
    _culling_flags(p)
    p.add_argument("--mode", choices=MODES, default="lut")
    p.add_argument("--size", type=_size, default=(480, 270))
    p.add_argument("--range", dest="range_max", type=int, default=HEATMAP_RANGE)
    p.add_argument("--out", default="heatmap.ppm")

    p = sub.add_parser("bench", help="all modes on several scenes, written as CSV")
    _scene_flags(p, multiple=True)
    p.add_argument("--mode", action="append", choices=MODES, help="restrict modes (repeatable)")
    p.add_argument("--res", type=int, action="append", help="mask resolutions (repeatable, default 4 and 6)")
    p.add_argument("--ray-res", type=_ray_res, action="append", help="ray LUT resolutions for lut mode")
    p.add_argument("--level", type=_level, default=3)
    p.add_argument("--levels", default="1,2,3,4,5", help="comma list for the L sweep, empty to skip")
    p.add_argument("--lut-size", type=int, default=256)
    p.add_argument("--chunk-bits", type=int, default=8)
    p.add_argument("--spp", type=int, default=1)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--size", type=_size, default=(160, 90))
    p.add_argument("--out", default="bench_images", help="directory for the reference images")
    p.add_argument("--report", default="bench.csv")

    p = sub.add_parser("gen-hair", help="write the procedural hair scene as OBJ")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strands", type=int, default=300)
    p.add_argument("--segments", type=int, default=12)
    p.add_argument("--thickness", type=float, default=0.004)
    p.add_argument("--out", default="hair.obj")

    p = sub.add_parser("dump-bvh", help="serialize the 4-wide BVH with masks")
    _scene_flags(p)
    _culling_flags(p)
    p.add_argument("--compressed", action="store_true", help="store 1-byte mask indices")
    p.add_argument("--out", default="scene.bvh")
    return parser


def _cmd_render(args) -> None:
    tris = load_scene(args.scene, seed=args.seed)
    w, h = args.size
    cfg = scene_config(tris, w, h, args.spp, args.seed, args.depth)
    off = None
    pipe = build_pipeline(tris, args.mode, _params(args))
    res = render(cfg, pipe)
    write_ppm(args.out, res.image)
    print(f"{args.out}: {w}x{h}, {res.units} units ({res.node_tests} node + {res.triangle_tests} triangle tests)")
    if args.report:
        if pipe.mode == CullingMode.OFF:
            off = res
        else:
            off = render(cfg, build_pipeline(tris, "off", _params(args), bvh=pipe.bvh))
        emit_report([_report(Path(args.scene).stem, pipe, res, off.units)], args.report)


def _cmd_heatmap(args) -> None:
    tris = load_scene(args.scene, seed=args.seed)
    w, h = args.size
    cfg = scene_config(tris, w, h)
    img, counts = render_heatmap(cfg.camera, w, h, build_pipeline(tris, args.mode, _params(args)),
                                 args.range_max)
    write_ppm(args.out, img)
    print(f"{args.out}: mean {counts.mean():.1f}, max {counts.max()} units per pixel")


def _cmd_bench(args) -> None:
    levels = tuple(int(v) for v in args.levels.split(",") if v.strip())
    settings = BenchSettings(
        scenes=tuple(args.scene or BenchSettings.scenes), modes=tuple(args.mode or MODES),
        resolutions=tuple(args.res or (4, 6)), ray_res=tuple(args.ray_res or (1, 2)), L=args.level,
        K=args.lut_size, b=args.chunk_bits, width=args.size[0], height=args.size[1], spp=args.spp,
        max_depth=args.depth, seed=args.seed, level_sweep=levels)
    reports = run_bench(settings, args.out)
    emit_report(reports, args.report)
    print(f"{args.report}: {len(reports)} rows")


def _cmd_gen_hair(args) -> None:
    tris = gen_hair_scene(args.seed, args.strands, args.segments, args.thickness)
    write_obj(args.out, tris)
    print(f"{args.out}: {len(tris)} triangles")


def _cmd_dump_bvh(args) -> None:
    tris = load_scene(args.scene, seed=args.seed)
    mode = "compressed" if args.compressed else "ideal"
    pipe = build_pipeline(tris, mode, _params(args))
    n = dump_bvh(pipe.bvh, args.out, compressed=args.compressed)
    print(f"{args.out}: {pipe.bvh.n_nodes} nodes, {n} bytes")


COMMANDS = {"render": _cmd_render, "heatmap": _cmd_heatmap, "bench": _cmd_bench,
            "gen-hair": _cmd_gen_hair, "dump-bvh": _cmd_dump_bvh}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        set_num_threads(args.threads)
    try:
        COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"subcull: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
