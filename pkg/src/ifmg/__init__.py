"""Interface-fitted P1/Q1 finite elements with an interface-adaptive multigrid solver."""

from .geometry import LevelSet, MeshTooCoarse, Point2, Region, builtin_levelsets, edge_intersections, get_levelset, side
from .meshgen import build_hierarchy, detect_interface_elements, fit_mesh, make_uniform_mesh, region_areas
from .fem import DofMap, ProblemData, assemble, build_z_gamma, reconstruct_uh
from .mg import MGConfig, build_levels, solve_cg, solve_direct, solve_mg, vcycle
from .exact import exact_registry, get_exact
from .errors import compute_errors, eoc

__all__ = [
    "LevelSet", "MeshTooCoarse", "Point2", "Region", "builtin_levelsets", "edge_intersections",
    "get_levelset", "side", "build_hierarchy", "detect_interface_elements", "fit_mesh",
    "make_uniform_mesh", "region_areas", "DofMap", "ProblemData", "assemble", "build_z_gamma",
    "reconstruct_uh", "MGConfig", "build_levels", "solve_cg", "solve_direct", "solve_mg", "vcycle",
    "exact_registry", "get_exact", "compute_errors", "eoc",
]
