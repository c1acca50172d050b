"""Sparse hierarchical feature grid over Morton-coded octree cells.

Level 0 is the root cell spanning the whole grid; cell size halves per
level; leaves sit at level height-1. Learnable feature vectors live at the
deduplicated corners of the last few levels. Interpolation outside occupied
cells returns zeros so lattice probes past coverage stay legal.
"""

import struct

import numpy as np

from ..diffmath import Tensor, weighted_corner_sum


class OctreeError(ValueError):
    pass


def _spread_bits(v):
    """Interleave zeros between bits (21-bit input) for 3D Morton codes."""
    v = v.astype(np.uint64)
    v = (v | (v << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v << np.uint64(2))) & np.uint64(0x1249249249249249)
    return v


def _compact_bits(v):
    v = v & np.uint64(0x1249249249249249)
    v = (v | (v >> np.uint64(2))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v >> np.uint64(4))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v >> np.uint64(8))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v >> np.uint64(16))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v >> np.uint64(32))) & np.uint64(0x1FFFFF)
    return v


def morton_encode(ix, iy, iz):
    return _spread_bits(np.asarray(ix)) | (_spread_bits(np.asarray(iy)) << np.uint64(1)) \
        | (_spread_bits(np.asarray(iz)) << np.uint64(2))


def morton_decode(codes):
    codes = np.asarray(codes, dtype=np.uint64)
    return (_compact_bits(codes).astype(np.int64),
            _compact_bits(codes >> np.uint64(1)).astype(np.int64),
            _compact_bits(codes >> np.uint64(2)).astype(np.int64))


class OctreeFeatureGrid:
    def __init__(self, origin, leaf_voxel, height, level_codes, feature_dim=8,
                 n_feature_levels=3, seed=0, features=None):
        if leaf_voxel <= 0:
            raise OctreeError("leaf voxel size must be positive")
        self.origin = np.asarray(origin, dtype=np.float64)
        self.leaf_voxel = float(leaf_voxel)
        self.height = int(height)
        self.feature_dim = int(feature_dim)
        self.n_feature_levels = int(n_feature_levels)
        self.level_codes = [np.sort(np.asarray(c, dtype=np.uint64)) for c in level_codes]
        assert len(self.level_codes) == self.height
        self.feature_levels = list(range(self.height - self.n_feature_levels, self.height))
        # corner dedup per feature level: map cell -> 8 corner feature rows
        self.corner_codes = {}
        self.cell_corners = {}
        self.features = {}
        rng = np.random.default_rng(seed)
        for lv in self.feature_levels:
            codes = self.level_codes[lv]
            ix, iy, iz = morton_decode(codes)
            corners = []
            for dz in (0, 1):
                for dy in (0, 1):
                    for dx in (0, 1):
                        corners.append(morton_encode(ix + dx, iy + dy, iz + dz))
            corner_mat = np.stack(corners, axis=1)           # (n_cells, 8)
            uniq = np.unique(corner_mat)
            self.corner_codes[lv] = uniq
            self.cell_corners[lv] = np.searchsorted(uniq, corner_mat).astype(np.int64)
            if features is not None and lv in features:
                data = features[lv]
            else:
                data = (rng.normal(size=(len(uniq), feature_dim)) * 0.01).astype(np.float32)
            self.features[lv] = Tensor(data, requires_grad=True, name=f"octree.feat{lv}")

    def cell_size(self, level):
        return self.leaf_voxel * (2 ** (self.height - 1 - level))

    def n_cells(self, level):
        return len(self.level_codes[level])

    def occupied_leaf(self, points):
        """Boolean mask: does the leaf cell containing each point exist."""
        lv = self.height - 1
        cell = np.floor((np.atleast_2d(points) - self.origin) / self.cell_size(lv)).astype(np.int64)
        return self._lookup(lv, cell) >= 0

    def _lookup(self, level, cell):
        """Cell integer coords (N, 3) -> occupied cell row or -1."""
        n_side = 2 ** level
        ok = np.all((cell >= 0) & (cell < n_side), axis=1)
        codes = np.zeros(len(cell), dtype=np.uint64)
        codes[ok] = morton_encode(cell[ok, 0], cell[ok, 1], cell[ok, 2])
        table = self.level_codes[level]
        pos = np.searchsorted(table, codes)
        pos = np.minimum(pos, max(len(table) - 1, 0))
        found = ok & (len(table) > 0) & (table[pos] == codes)
        return np.where(found, pos, -1)

    def interp_features(self, points, level):
        """Trilinear corner-feature blend at one feature level -> Tensor (P, D).

        Unoccupied or out-of-grid queries contribute zero features (and no
        gradient), by giving them zero interpolation weights.
        """
        if level not in self.features:
            raise OctreeError(f"level {level} stores no features")
        p = np.atleast_2d(points)
        size = self.cell_size(level)
        rel = (p - self.origin) / size
        cell = np.floor(rel).astype(np.int64)
        frac = (rel - cell).astype(np.float32)
        row = self._lookup(level, cell)
        hit = row >= 0
        idx = np.zeros((len(p), 8), dtype=np.int64)
        idx[hit] = self.cell_corners[level][row[hit]]
        fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
        wx = np.stack([1 - fx, fx], axis=1)
        wy = np.stack([1 - fy, fy], axis=1)
        wz = np.stack([1 - fz, fz], axis=1)
        # corner order matches morton offsets: dx fastest, then dy, then dz
        w = (wz[:, :, None, None] * wy[:, None, :, None] * wx[:, None, None, :]).reshape(-1, 8)
        w = np.where(hit[:, None], w, 0.0).astype(np.float32)
        return weighted_corner_sum(self.features[level], idx, w)

    def interp_all_levels(self, points):
        """Per-level feature tensors, coarse to fine."""
        return [self.interp_features(points, lv) for lv in self.feature_levels]

    def parameters(self):
        return [self.features[lv] for lv in self.feature_levels]

    # --- checkpoint topology section ---------------------------------------

    def topology_blob(self):
        parts = [struct.pack("<IIId", self.height, self.n_feature_levels,
                             self.feature_dim, self.leaf_voxel)]
        parts.append(struct.pack("<3d", *self.origin))
        for lv in range(self.height):
            codes = self.level_codes[lv]
            parts.append(struct.pack("<IQ", lv, len(codes)))
            parts.append(np.ascontiguousarray(codes, dtype="<u8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_topology_blob(cls, blob, feature_tensors=None, seed=0):
        height, n_feat_levels, feature_dim, leaf = struct.unpack_from("<IIId", blob, 0)
        off = struct.calcsize("<IIId")
        origin = struct.unpack_from("<3d", blob, off)
        off += struct.calcsize("<3d")
        level_codes = []
        for _ in range(height):
            lv, n = struct.unpack_from("<IQ", blob, off)
            off += struct.calcsize("<IQ")
            codes = np.frombuffer(blob, dtype="<u8", count=n, offset=off).copy()
            off += 8 * n
            level_codes.append(codes)
        return cls(origin, leaf, height, level_codes, feature_dim=feature_dim,
                   n_feature_levels=n_feat_levels, seed=seed, features=feature_tensors)


def build_octree(points, leaf_voxel=0.2, height=None, truncation=0.3,
                 feature_dim=8, n_feature_levels=3, seed=0, margin=1.0):
    """Allocate cells covering every voxel within `truncation` of a point.

    height=None picks the smallest tree that spans the point bounds plus
    margin at the requested leaf size.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.size == 0:
        raise OctreeError("cannot build an octree from an empty point set")
    # snap the anchor to leaf-voxel multiples so cell membership is a
    # property of world position, not of the particular point set
    lo = np.floor((pts.min(axis=0) - truncation - margin) / leaf_voxel) * leaf_voxel
    hi = pts.max(axis=0) + truncation + margin
    extent = float(np.max(hi - lo))
    if height is None:
        height = max(int(np.ceil(np.log2(extent / leaf_voxel))) + 1, n_feature_levels + 1)
    n_side = 2 ** (height - 1)
    if n_side * leaf_voxel < extent:
        raise OctreeError(
            f"height {height} at leaf {leaf_voxel} m spans {n_side * leaf_voxel:.1f} m "
            f"< scene extent {extent:.1f} m")
    origin = lo
    cell = np.floor((pts - origin) / leaf_voxel).astype(np.int64)
    occupied = np.unique(morton_encode(cell[:, 0], cell[:, 1], cell[:, 2]))
    # dilate occupied leaves so the whole truncation band is covered
    r = int(np.ceil((truncation + 0.5 * np.sqrt(3) * leaf_voxel) / leaf_voxel))
    ix, iy, iz = morton_decode(occupied)
    shifted = []
    for dx in range(-r, r + 1):
        for dy in range(-r, r + 1):
            for dz in range(-r, r + 1):
                if (np.sqrt(dx * dx + dy * dy + dz * dz) - 0.5 * np.sqrt(3)) * leaf_voxel > truncation:
                    continue
                jx, jy, jz = ix + dx, iy + dy, iz + dz
                ok = (jx >= 0) & (jy >= 0) & (jz >= 0) & (jx < n_side) & (jy < n_side) & (jz < n_side)
                shifted.append(morton_encode(jx[ok], jy[ok], jz[ok]))
    leaf_codes = np.unique(np.concatenate(shifted))
    level_codes = [None] * height
    level_codes[height - 1] = leaf_codes
    codes = leaf_codes
    for lv in range(height - 2, -1, -1):
        codes = np.unique(codes >> np.uint64(3))
        level_codes[lv] = codes
    return OctreeFeatureGrid(origin, leaf_voxel, height, level_codes,
                             feature_dim=feature_dim, n_feature_levels=n_feature_levels,
                             seed=seed)
