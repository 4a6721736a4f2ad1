"""Subspace culling for ray traversal of 4-wide BVHs.

Each BVH child slot carries a coarse R^3 occupancy mask.  During traversal
the ray's entry/exit cells give a ray mask, and children whose masks do not
overlap it are skipped even though their boxes were hit.
"""
from .bvh import BuildConfig, Bvh, EmptySceneError, build_bvh, dump_bvh, masked_sah_cost, sah_cost
from .compression import (
    CompressionLut, RayObjectBitTable, RequirementTables, build_ray_object_bit_table,
    build_requirement_tables, compress_masks, index_of_optimal_mask, select_compression_lut,
)
from .geometry import Aabb, Ray, Triangle, intersect_ray_aabb, intersect_ray_triangle, sweep_box_overlap
from .hierarchy import attach_masks, build_filling_pattern_table, fill_by_approximated_occupancy
from .masks import GridFrame, OccupancyMask, dda_ray_cells, mask_and_nonzero, voxelize_triangle
from .raylut import RayMaskLut, build_ray_mask_lut, lookup_ray_mask
from .render import Camera, CullingParams, build_pipeline, render, render_heatmap
from .report import RunReport, emit_report
from .scenes import gen_cube_array, gen_hair_scene, load_obj
from .traversal import (
    ConfigurationError, CullingMode, CullingTables, HitRecord, TraversalError, TraversalStats, prepare,
    trace_rays, traverse, traverse_any,
)

__version__ = "0.1.0"

__all__ = [
    "Aabb", "BuildConfig", "Bvh", "Camera", "CompressionLut", "ConfigurationError", "CullingMode",
    "CullingParams", "CullingTables", "EmptySceneError", "GridFrame", "HitRecord", "OccupancyMask",
    "Ray", "RayMaskLut", "RayObjectBitTable", "RequirementTables", "RunReport", "TraversalError",
    "TraversalStats", "Triangle", "attach_masks", "build_bvh", "build_filling_pattern_table",
    "build_pipeline", "build_ray_mask_lut", "build_ray_object_bit_table", "build_requirement_tables",
    "compress_masks", "dda_ray_cells", "dump_bvh", "emit_report", "fill_by_approximated_occupancy",
    "gen_cube_array", "gen_hair_scene", "index_of_optimal_mask", "intersect_ray_aabb",
    "intersect_ray_triangle", "load_obj", "lookup_ray_mask", "mask_and_nonzero", "masked_sah_cost",
    "prepare", "render", "render_heatmap", "sah_cost", "select_compression_lut", "sweep_box_overlap",
    "trace_rays", "traverse", "traverse_any", "voxelize_triangle",
]
