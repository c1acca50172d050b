"""Dual decoders over positional encoding + interpolated octree features."""

from dataclasses import dataclass, field

import numpy as np

from ..diffmath import Mlp, Tensor, concat, no_grad


def positional_encode(points, bands):
    """[p, sin(2^k pi p), cos(2^k pi p) for k < bands] -> (N, 3 + 6*bands)."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float32))
    parts = [p]
    for k in range(bands):
        w = (2.0 ** k) * np.pi
        parts.append(np.sin(w * p))
        parts.append(np.cos(w * p))
    return np.concatenate(parts, axis=1).astype(np.float32)


@dataclass
class FieldConfig:
    """Training hyperparameters for the implicit field.

    sigma is the flatness of the occupancy sigmoid (meters); truncation the
    supervised band half-width along rays; gradients for the regularizers
    use central differences with step grad_step_voxels * leaf voxel.
    """

    leaf_voxel: float = 0.2
    octree_height: int = 12          # auto-shrunk to the scene when auto_height
    auto_height: bool = True
    feature_dim: int = 8
    n_feature_levels: int = 3
    bands: int = 6
    hidden: int = 64
    sigma: float = 0.05
    truncation: float = 0.3
    samples_per_ray: int = 6
    eps_voxels: float = 0.1          # smoothness perturbation, in leaf voxels
    grad_step_voxels: float = 0.25
    lambda_eik: float = 0.1
    lambda_smooth: float = 0.01
    lambda_rgb: float = 1.0
    lr: float = 1e-3
    iterations: int = 2000
    rays_per_batch: int = 1024
    grad_subset: int = 256           # rays receiving eikonal/smoothness terms
    seed: int = 0


class FieldDecoders:
    """SDF and RGB heads; both consume f(p) plus concatenated level features."""

    def __init__(self, cfg: FieldConfig, center, half_extent, seed=0):
        self.bands = cfg.bands
        self.center = np.asarray(center, dtype=np.float64)
        self.half_extent = float(half_extent)
        in_dim = 3 + 6 * cfg.bands + cfg.feature_dim * cfg.n_feature_levels
        self.sdf_mlp = Mlp([in_dim, cfg.hidden, cfg.hidden, 1],
                           ["relu", "relu", "none"], seed=seed, name="sdf")
        self.rgb_mlp = Mlp([in_dim, cfg.hidden, cfg.hidden, 3],
                           ["relu", "relu", "sigmoid"], seed=seed + 1, name="rgb")

    def encode_input(self, grid, points):
        p = np.atleast_2d(points)
        norm = (p - self.center) / self.half_extent
        enc = Tensor(positional_encode(norm, self.bands))
        feats = grid.interp_all_levels(p)
        return concat([enc] + feats, axis=1)

    def parameters(self):
        return self.sdf_mlp.parameters() + self.rgb_mlp.parameters()

    def state_dict(self):
        out = dict(self.sdf_mlp.state_dict())
        out.update(self.rgb_mlp.state_dict())
        return out

    def load_state_dict(self, arrays):
        self.sdf_mlp.load_state_dict(arrays)
        self.rgb_mlp.load_state_dict(arrays)


def decode_sdf(grid, decoders, points):
    """SDF estimates (meters) as a (P,) tape tensor."""
    x = decoders.encode_input(grid, points)
    return decoders.sdf_mlp(x)[:, 0]


def decode_rgb(grid, decoders, points):
    """Color estimates in (0,1)^3 as a (P, 3) tape tensor."""
    x = decoders.encode_input(grid, points)
    return decoders.rgb_mlp(x)


def decode_values(grid, decoders, points, want_rgb=False, chunk=65536):
    """Graph-free numpy evaluation, batched for lattice-sized queries."""
    p = np.atleast_2d(points)
    sdf = np.empty(len(p), dtype=np.float32)
    rgb = np.empty((len(p), 3), dtype=np.float32) if want_rgb else None
    with no_grad():
        for lo in range(0, len(p), chunk):
            sl = slice(lo, lo + chunk)
            sdf[sl] = decode_sdf(grid, decoders, p[sl]).data
            if want_rgb:
                rgb[sl] = decode_rgb(grid, decoders, p[sl]).data
    return (sdf, rgb) if want_rgb else sdf


def sdf_gradient(grid, decoders, points, step):
    """Central-difference spatial gradient of the decoded SDF (numpy)."""
    p = np.atleast_2d(points)
    g = np.empty((len(p), 3), dtype=np.float32)
    for ax in range(3):
        d = np.zeros(3)
        d[ax] = step
        g[:, ax] = (decode_values(grid, decoders, p + d)
                    - decode_values(grid, decoders, p - d)) / (2 * step)
    return g
