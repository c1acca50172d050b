"""Marching cubes over the decoded field, restricted to octree coverage."""

import logging
from dataclasses import dataclass

import numpy as np

from ..field.model import decode_values, sdf_gradient
from ..field.octree import morton_decode
from .tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_MASKS, TRIANGLE_TABLE

log = logging.getLogger(__name__)


@dataclass
class ColorMesh:
    vertices: np.ndarray    # (V, 3) float32 world meters
    colors: np.ndarray      # (V, 3) float32 in [0, 1]
    normals: np.ndarray     # (V, 3) float32 unit
    triangles: np.ndarray   # (T, 3) int32

    def __len__(self):
        return len(self.triangles)

    def validate(self):
        assert self.triangles.size == 0 or self.triangles.max() < len(self.vertices)
        if len(self.vertices):
            n = np.linalg.norm(self.normals, axis=1)
            assert np.all(np.abs(n - 1.0) < 1e-3)
        if len(self.triangles):
            a = self.vertices[self.triangles[:, 0]]
            b = self.vertices[self.triangles[:, 1]]
            c = self.vertices[self.triangles[:, 2]]
            area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
            assert np.all(area > 1e-12)


def _march_cells(cell_coords, corner_sdf, origin, spacing):
    """Classic table-driven triangulation of candidate lattice cells.

    cell_coords (C, 3) int lattice cells, corner_sdf (C, 8). Shared edge
    vertices are deduplicated via canonical (lattice corner, axis) keys, so
    the surface is watertight across neighboring cells.
    """
    inside = corner_sdf < 0.0
    case = np.zeros(len(cell_coords), dtype=np.int32)
    for bit in range(8):
        case |= inside[:, bit].astype(np.int32) << bit
    active = np.flatnonzero(EDGE_MASKS[case] != 0)

    edge_axis = np.argmax(np.abs(CORNER_OFFSETS[EDGE_CORNERS[:, 1]]
                                 - CORNER_OFFSETS[EDGE_CORNERS[:, 0]]), axis=1)
    edge_base = np.minimum(CORNER_OFFSETS[EDGE_CORNERS[:, 0]],
                           CORNER_OFFSETS[EDGE_CORNERS[:, 1]])

    vert_index = {}
    vert_pos = []
    tris = []
    for ci in active:
        base = cell_coords[ci]
        vals = corner_sdf[ci]
        cell_case = case[ci]
        edge_verts = {}
        mask = EDGE_MASKS[cell_case]
        for e in range(12):
            if not (mask >> e) & 1:
                continue
            key = (base[0] + edge_base[e, 0], base[1] + edge_base[e, 1],
                   base[2] + edge_base[e, 2], int(edge_axis[e]))
            idx = vert_index.get(key)
            if idx is None:
                a, b = EDGE_CORNERS[e]
                sa, sb = float(vals[a]), float(vals[b])
                t = 0.5 if sa == sb else min(max(sa / (sa - sb), 0.0), 1.0)
                pa = base + CORNER_OFFSETS[a]
                pb = base + CORNER_OFFSETS[b]
                pos = origin + spacing * (pa + t * (pb - pa))
                idx = len(vert_pos)
                vert_pos.append(pos)
                vert_index[key] = idx
            edge_verts[e] = idx
        row = TRIANGLE_TABLE[cell_case]
        for k in range(0, 16, 3):
            if row[k] < 0:
                break
            tris.append((edge_verts[row[k]], edge_verts[row[k + 1]], edge_verts[row[k + 2]]))

    vertices = np.array(vert_pos, dtype=np.float64).reshape(-1, 3)
    triangles = np.array(tris, dtype=np.int32).reshape(-1, 3)
    return vertices, triangles


def candidate_cells(grid, spacing):
    """Lattice cells covering the occupied leaves dilated by one voxel."""
    leaf = grid.leaf_voxel
    lv = grid.height - 1
    ix, iy, iz = morton_decode(grid.level_codes[lv])
    cells = np.stack([ix, iy, iz], axis=1)
    offs = np.array([(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
                     for dz in (-1, 0, 1)], dtype=np.int64)
    dilated = (cells[None, :, :] + offs[:, None, :]).reshape(-1, 3)
    leaf_cells = np.unique(dilated, axis=0)
    if abs(spacing - leaf) < 1e-12:
        return leaf_cells
    lo = np.floor(leaf_cells * leaf / spacing).astype(np.int64)
    hi = np.ceil((leaf_cells + 1) * leaf / spacing).astype(np.int64)
    span = hi - lo
    reps = np.prod(span, axis=1)
    out = np.repeat(lo, reps, axis=0)
    cursor = 0
    for k in range(len(leaf_cells)):
        g = np.stack(np.meshgrid(np.arange(span[k, 0]), np.arange(span[k, 1]),
                                 np.arange(span[k, 2]), indexing="ij"), axis=-1).reshape(-1, 3)
        out[cursor:cursor + len(g)] += g
        cursor += len(g)
    return np.unique(out, axis=0)


def extract_mesh(grid, decoders, spacing=None, sdf_fn=None, rgb_fn=None):
    """Triangulate the zero level set of the decoded SDF as a ColorMesh.

    spacing defaults to the grid's leaf voxel. sdf_fn / rgb_fn override the
    decoded field (analytic stubs in tests).
    """
    spacing = grid.leaf_voxel if spacing is None else float(spacing)
    if spacing <= 0:
        raise ValueError("lattice spacing must be positive")
    sdf_at = sdf_fn if sdf_fn is not None else (lambda p: decode_values(grid, decoders, p))
    cells = candidate_cells(grid, spacing)
    corners = (cells[:, None, :] + CORNER_OFFSETS[None, :, :]).reshape(-1, 3)
    uniq, inverse = np.unique(corners, axis=0, return_inverse=True)
    sdf_u = sdf_at(grid.origin + uniq * spacing)
    corner_sdf = sdf_u[inverse].reshape(len(cells), 8)

    vertices, triangles = _march_cells(cells, corner_sdf, grid.origin, spacing)
    if len(triangles) == 0:
        log.warning("marching cubes found no isosurface crossings")
        empty3 = np.zeros((0, 3), dtype=np.float32)
        return ColorMesh(empty3, empty3.copy(), empty3.copy(),
                         np.zeros((0, 3), dtype=np.int32))

    # drop degenerate triangles, keep every referenced vertex
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    triangles = triangles[area > 1e-12]

    if rgb_fn is not None:
        colors = rgb_fn(vertices)
    elif decoders is not None:
        _, colors = decode_values(grid, decoders, vertices, want_rgb=True)
    else:
        colors = np.full((len(vertices), 3), 0.5, dtype=np.float32)

    step = 0.5 * spacing
    if sdf_fn is not None:
        g = np.stack([(sdf_at(vertices + np.eye(3)[ax] * step)
                       - sdf_at(vertices - np.eye(3)[ax] * step)) / (2 * step)
                      for ax in range(3)], axis=1)
    else:
        g = sdf_gradient(grid, decoders, vertices, step)
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    normals = g / np.maximum(norms, 1e-9)

    mesh = ColorMesh(vertices.astype(np.float32), np.clip(colors, 0, 1).astype(np.float32),
                     normals.astype(np.float32), triangles.astype(np.int32))
    return mesh
