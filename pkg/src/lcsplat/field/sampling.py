"""Training sample generation along LiDAR rays."""

from dataclasses import dataclass

import numpy as np

from ..scene.synth import lidar_point_colors


@dataclass
class RayBank:
    """Flattened returns across all training frames, with color targets."""

    endpoints: np.ndarray      # (N, 3)
    origins: np.ndarray        # (N, 3) per-return sensor center
    colors: np.ndarray         # (N, 3) projected RGB targets
    has_color: np.ndarray      # (N,) bool


@dataclass
class RaySampleBatch:
    points: np.ndarray         # (P, 3) query points
    sdf_targets: np.ndarray    # (P,) signed offsets, positive toward the sensor
    ray_ids: np.ndarray        # (P,) row into the bank
    color_rows: np.ndarray     # rows of `points` carrying color targets
    color_targets: np.ndarray  # (len(color_rows), 3)


def build_ray_bank(ds, frames, color_views_fn):
    """Collect every return of the training frames and its color target.

    color_views_fn(frame) must return the (camera, rgb, depth) views used to
    look colors up; depth is whatever occlusion reference is available.
    """
    eps, orgs, cols, has = [], [], [], []
    for f in frames:
        sweep = ds.load_sweep(f)
        if len(sweep.points) == 0:
            continue
        views = color_views_fn(f)
        c, h = lidar_point_colors(sweep.points, views)
        eps.append(sweep.points.astype(np.float64))
        orgs.append(np.broadcast_to(sweep.origin.astype(np.float64), sweep.points.shape).copy())
        cols.append(c)
        has.append(h)
    if not eps:
        raise ValueError("no LiDAR returns in the training frames")
    return RayBank(np.concatenate(eps), np.concatenate(orgs),
                   np.concatenate(cols), np.concatenate(has))


def sample_rays(bank, cfg, rng):
    """Draw rays_per_batch rays; each yields its endpoint plus uniform
    signed offsets in [-truncation, +truncation] along the ray.

    Offsets are positive toward the sensor (free space in front of the
    surface), so the target signed distance equals the offset itself.
    """
    n = len(bank.endpoints)
    rows = rng.integers(0, n, size=cfg.rays_per_batch)
    ends = bank.endpoints[rows]
    dirs = bank.origins[rows] - ends
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    k = cfg.samples_per_ray
    offsets = rng.uniform(-cfg.truncation, cfg.truncation, size=(len(rows), k))
    offsets[:, 0] = 0.0  # exact endpoint sample carries the color target
    pts = ends[:, None, :] + offsets[:, :, None] * dirs[:, None, :]
    ray_ids = np.repeat(rows, k)
    sdf_targets = offsets.reshape(-1).astype(np.float32)
    endpoint_rows = np.arange(len(rows)) * k
    with_color = bank.has_color[rows]
    color_rows = endpoint_rows[with_color]
    color_targets = bank.colors[rows][with_color]
    return RaySampleBatch(points=pts.reshape(-1, 3), sdf_targets=sdf_targets,
                          ray_ids=ray_ids, color_rows=color_rows,
                          color_targets=color_targets)
