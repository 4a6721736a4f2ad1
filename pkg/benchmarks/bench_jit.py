"""Compiled vs interpreted kernels on the same workload.

Each path runs in its own interpreter because the JIT switch is read at
import time.  The compiled path is timed twice per stage (the first call
includes compilation or cache loading) and the faster run is reported.

    python benchmarks/bench_jit.py [--strands 60] [--rays 2000]
"""
import argparse
import hashlib
import json
import os
import subprocess
import sys
import time


def workload(strands, rays):
    import numpy as np

    from subcull import (
        CullingTables, attach_masks, build_bvh, build_ray_mask_lut, build_ray_object_bit_table,
        compress_masks, prepare, trace_rays,
    )
    from subcull.scenes import gen_hair_scene

    tris = gen_hair_scene(seed=1, strand_count=strands, segments=8)
    rng = np.random.default_rng(0)
    o = rng.random((rays, 3)) * 3 - 1
    d = rng.random((rays, 3)) - o
    timings = {}
    digest = hashlib.sha256()

    def stage(name, fn):
        best = None
        for _ in range(2):
            t0 = time.perf_counter()
            out = fn()
            dt = time.perf_counter() - t0
            best = dt if best is None else min(best, dt)
        timings[name] = best
        return out

    bvh = stage("bvh build", lambda: build_bvh(tris))
    bvh = stage("mask attach L=3", lambda: compress_masks(attach_masks(bvh, L=3, R=4)))
    lut = stage("ray LUT R=4", lambda: build_ray_mask_lut(4, 4))
    bits = stage("bit table", lambda: build_ray_object_bit_table(lut, bvh.compression.lut))
    for mode, tables in (("off", None), ("ideal", None), ("lut", CullingTables(ray_lut=lut)),
                         ("compressed", CullingTables(bit_table=bits))):
        scene = prepare(bvh, mode, tables)
        res = stage(f"trace {mode}", lambda: trace_rays(scene, o, d))
        digest.update(res.primitive_id.tobytes() + res.t.tobytes() + res.node_tests.tobytes())
    return timings, digest.hexdigest()


def run_worker(jit, strands, rays):
    env = dict(os.environ)
    env["SUBCULL_DISABLE_JIT"] = "0" if jit else "1"
    cmd = [sys.executable, __file__, "--worker", "--strands", str(strands), "--rays", str(rays)]
    out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
    return json.loads(out.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--strands", type=int, default=60)
    ap.add_argument("--rays", type=int, default=2000)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        timings, digest = workload(args.strands, args.rays)
        print(json.dumps({"timings": timings, "digest": digest}))
        return
    fast = run_worker(True, args.strands, args.rays)
    slow = run_worker(False, args.strands, args.rays)
    print(f"{'stage':<18}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, t_fast in fast["timings"].items():
        t_slow = slow["timings"][name]
        print(f"{name:<18}{t_fast * 1e3:>12.2f}{t_slow * 1e3:>12.2f}{t_slow / max(t_fast, 1e-9):>9.1f}x")
    same = fast["digest"] == slow["digest"]
    print("results identical:", same)
    sys.exit(0 if same else 1)


if __name__ == "__main__":
    main()
