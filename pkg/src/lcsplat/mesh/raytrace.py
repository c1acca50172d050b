"""Ray-traced dense depth from the colorized mesh.

Hot loops are numba kernels. The brute-force tracer shares the exact
triangle test and the exact (t, index) tie-break predicate with the BVH
tracer, so their outputs are bitwise identical: nearest t wins, equal t
goes to the smaller original triangle index.
"""

import numpy as np
from numba import njit, prange

T_MIN = 1e-6


@njit(cache=True, inline="always")
def _ray_tri(ox, oy, oz, dx, dy, dz, verts, tris, k):
    ia, ib, ic = tris[k, 0], tris[k, 1], tris[k, 2]
    ax, ay, az = verts[ia, 0], verts[ia, 1], verts[ia, 2]
    e1x = verts[ib, 0] - ax
    e1y = verts[ib, 1] - ay
    e1z = verts[ib, 2] - az
    e2x = verts[ic, 0] - ax
    e2y = verts[ic, 1] - ay
    e2z = verts[ic, 2] - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -1e-12 < det < 1e-12:
        return np.inf
    inv = 1.0 / det
    tx = ox - ax
    ty = oy - ay
    tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -1e-9 or u > 1.0 + 1e-9:
        return np.inf
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -1e-9 or u + v > 1.0 + 1e-9:
        return np.inf
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= T_MIN:
        return np.inf
    return t


@njit(cache=True, inline="always")
def _slab(ox, oy, oz, idx_, idy, idz, lox, loy, loz, hix, hiy, hiz, tmax):
    t0 = T_MIN
    t1 = tmax
    tx0 = (lox - ox) * idx_
    tx1 = (hix - ox) * idx_
    if tx0 > tx1:
        tx0, tx1 = tx1, tx0
    t0 = max(t0, tx0)
    t1 = min(t1, tx1)
    ty0 = (loy - oy) * idy
    ty1 = (hiy - oy) * idy
    if ty0 > ty1:
        ty0, ty1 = ty1, ty0
    t0 = max(t0, ty0)
    t1 = min(t1, ty1)
    tz0 = (loz - oz) * idz
    tz1 = (hiz - oz) * idz
    if tz0 > tz1:
        tz0, tz1 = tz1, tz0
    t0 = max(t0, tz0)
    t1 = min(t1, tz1)
    return t0 <= t1


@njit(cache=True)
def _trace_one(ox, oy, oz, dx, dy, dz, node_lo, node_hi, node_left, node_right,
               tri_order, verts, tris, stack):
    idx_ = 1.0 / dx if dx != 0.0 else np.inf
    idy = 1.0 / dy if dy != 0.0 else np.inf
    idz = 1.0 / dz if dz != 0.0 else np.inf
    best_t = np.inf
    best_i = -1
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        n = stack[top]
        if not _slab(ox, oy, oz, idx_, idy, idz,
                     node_lo[n, 0], node_lo[n, 1], node_lo[n, 2],
                     node_hi[n, 0], node_hi[n, 1], node_hi[n, 2], best_t):
            continue
        left = node_left[n]
        if left < 0:
            start = -left - 1
            count = -node_right[n]
            for s in range(start, start + count):
                k = tri_order[s]
                t = _ray_tri(ox, oy, oz, dx, dy, dz, verts, tris, k)
                if t < best_t or (t == best_t and k < best_i):
                    best_t = t
                    best_i = k
        else:
            stack[top] = left
            top += 1
            stack[top] = node_right[n]
            top += 1
    return best_t, best_i


@njit(cache=True, parallel=True)
def _trace_grid(origin, dirs, node_lo, node_hi, node_left, node_right,
                tri_order, verts, tris, depth, tri_hit):
    H, W = depth.shape
    for i in prange(H):
        stack = np.empty(128, dtype=np.int32)
        for j in range(W):
            t, k = _trace_one(origin[0], origin[1], origin[2],
                              dirs[i, j, 0], dirs[i, j, 1], dirs[i, j, 2],
                              node_lo, node_hi, node_left, node_right,
                              tri_order, verts, tris, stack)
            if k >= 0:
                depth[i, j] = t
                tri_hit[i, j] = k


@njit(cache=True, parallel=True)
def _trace_rays_kernel(origins, dirs, node_lo, node_hi, node_left, node_right,
                       tri_order, verts, tris, tvals, hits):
    for r in prange(origins.shape[0]):
        stack = np.empty(128, dtype=np.int32)
        t, k = _trace_one(origins[r, 0], origins[r, 1], origins[r, 2],
                          dirs[r, 0], dirs[r, 1], dirs[r, 2],
                          node_lo, node_hi, node_left, node_right,
                          tri_order, verts, tris, stack)
        tvals[r] = t
        hits[r] = k


@njit(cache=True, parallel=True)
def _brute_rays_kernel(origins, dirs, verts, tris, tvals, hits):
    for r in prange(origins.shape[0]):
        best_t = np.inf
        best_i = -1
        for k in range(tris.shape[0]):
            t = _ray_tri(origins[r, 0], origins[r, 1], origins[r, 2],
                         dirs[r, 0], dirs[r, 1], dirs[r, 2], verts, tris, k)
            if t < best_t or (t == best_t and k < best_i):
                best_t = t
                best_i = k
        tvals[r] = best_t
        hits[r] = best_i


def trace_rays(bvh, origins, dirs):
    """(t, triangle index) per ray; t = inf and index = -1 on miss."""
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    t = np.empty(len(dirs))
    hit = np.empty(len(dirs), dtype=np.int32)
    _trace_rays_kernel(origins, dirs, bvh.node_lo, bvh.node_hi, bvh.node_left,
                       bvh.node_right, bvh.tri_order, bvh.verts, bvh.tris, t, hit)
    return t, hit


def trace_rays_brute(verts, tris, origins, dirs):
    """All-triangle reference intersector (shares _ray_tri with the BVH)."""
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    t = np.empty(len(dirs))
    hit = np.empty(len(dirs), dtype=np.int32)
    _brute_rays_kernel(origins, dirs, np.asarray(verts, dtype=np.float64),
                       np.asarray(tris, dtype=np.int32), t, hit)
    return t, hit


def render_depth(bvh, cam, brute_force=False):
    """Dense z-depth image from the mesh; 0 where nothing is hit.

    Pixel rays go through pixel centers with direction scaled to unit
    camera z, so the ray parameter is directly the z-depth.
    """
    origin, dirs = cam.pixel_rays()
    H, W = dirs.shape[:2]
    if bvh is None or len(bvh.tris) == 0:
        return np.zeros((H, W), dtype=np.float32)
    if brute_force:
        t, hit = trace_rays_brute(bvh.verts, bvh.tris,
                                  np.broadcast_to(origin, (H * W, 3)).copy(),
                                  dirs.reshape(-1, 3))
        depth = np.where(hit >= 0, t, 0.0).reshape(H, W)
        return depth.astype(np.float32)
    depth = np.zeros((H, W))
    tri_hit = np.full((H, W), -1, dtype=np.int32)
    _trace_grid(np.ascontiguousarray(origin), np.ascontiguousarray(dirs),
                bvh.node_lo, bvh.node_hi, bvh.node_left, bvh.node_right,
                bvh.tri_order, bvh.verts, bvh.tris, depth, tri_hit)
    return depth.astype(np.float32)
