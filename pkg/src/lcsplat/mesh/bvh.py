"""Median-split bounding volume hierarchy over mesh triangles."""

from dataclasses import dataclass

import numpy as np

LEAF_SIZE = 4


@dataclass
class Bvh:
    """Flattened tree. Internal nodes store child ids in (left, right);
    leaves store left = -(start + 1), right = -count into tri_order."""

    node_lo: np.ndarray
    node_hi: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    tri_order: np.ndarray     # original triangle indices grouped per leaf
    verts: np.ndarray         # (V, 3) float64
    tris: np.ndarray          # (T, 3) int32


def build_bvh(mesh):
    """Build over a ColorMesh (or any object with .vertices/.triangles)."""
    verts = np.asarray(mesh.vertices, dtype=np.float64)
    tris = np.asarray(mesh.triangles, dtype=np.int32)
    if len(tris) == 0:
        raise ValueError("cannot build a BVH over an empty mesh")
    tv = verts[tris]                                  # (T, 3, 3)
    tri_lo = tv.min(axis=1)
    tri_hi = tv.max(axis=1)
    centers = tv.mean(axis=1)

    node_lo, node_hi, node_left, node_right = [], [], [], []
    order = np.arange(len(tris))
    out_order = []

    def emit(idx):
        node_lo.append(tri_lo[idx].min(axis=0) - 1e-9)
        node_hi.append(tri_hi[idx].max(axis=0) + 1e-9)
        node_left.append(0)
        node_right.append(0)
        return len(node_lo) - 1

    stack = [(order, emit(order))]
    while stack:
        idx, node = stack.pop()
        if len(idx) <= LEAF_SIZE:
            node_left[node] = -(len(out_order) + 1)
            node_right[node] = -len(idx)
            out_order.extend(idx.tolist())
            continue
        spans = centers[idx].max(axis=0) - centers[idx].min(axis=0)
        axis = int(np.argmax(spans))
        half = len(idx) // 2
        part = np.argpartition(centers[idx, axis], half)
        left_idx = idx[part[:half]]
        right_idx = idx[part[half:]]
        li = emit(left_idx)
        ri = emit(right_idx)
        node_left[node] = li
        node_right[node] = ri
        stack.append((left_idx, li))
        stack.append((right_idx, ri))

    return Bvh(node_lo=np.array(node_lo), node_hi=np.array(node_hi),
               node_left=np.array(node_left, dtype=np.int32),
               node_right=np.array(node_right, dtype=np.int32),
               tri_order=np.array(out_order, dtype=np.int32),
               verts=verts, tris=tris)
