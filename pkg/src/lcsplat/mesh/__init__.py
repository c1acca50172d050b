from .marching import ColorMesh, extract_mesh, candidate_cells
from .bvh import Bvh, build_bvh
from .raytrace import render_depth, trace_rays, trace_rays_brute
from ..scene.formats import write_mesh_ply, read_mesh_ply
