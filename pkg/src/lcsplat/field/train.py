"""Field training loop and field checkpoint IO."""

import copy
import logging
import time

import numpy as np

from ..diffmath import Adam, NumericFailure, save_checkpoint, load_checkpoint
from ..scene.dataset import rebuild_scene
from ..scene.synth import render_gt_views
from .loss import field_loss
from .model import FieldConfig, FieldDecoders
from .octree import OctreeFeatureGrid, build_octree
from .sampling import build_ray_bank, sample_rays

log = logging.getLogger(__name__)


def make_color_views_fn(ds, far_clip=120.0):
    """Views used to color LiDAR returns, with the best occlusion reference
    available: exact ground-truth depth for synthetic datasets, else the
    sparse projected LiDAR depth."""
    scene = None
    if ds.synth_meta is not None:
        scene, _ = rebuild_scene(ds)
    cache = {}

    def views_for(frame):
        if frame in cache:
            return cache[frame]
        views = []
        for cam_id in range(ds.n_cameras):
            cam = ds.camera(cam_id, frame)
            rgb = ds.load_image(cam_id, frame)
            if scene is not None:
                _, depth, _ = render_gt_views(scene, cam, far_clip=far_clip)
            else:
                depth = ds.lidar_depth_image(cam_id, frame)
            views.append((cam, rgb, depth))
        cache[frame] = views
        return views

    return views_for


def train_field(ds, cfg: FieldConfig, frames=None, progress=None):
    """Train grid + decoders on a dataset's LiDAR sweeps and images.

    Returns (grid, decoders, history). history rows are dicts per logged
    iteration. Non-finite losses abort via NumericFailure after restoring
    the last good snapshot.
    """
    frames = list(range(ds.n_frames)) if frames is None else list(frames)
    points = ds.merged_lidar_points(frames)
    grid = build_octree(points, leaf_voxel=cfg.leaf_voxel,
                        height=None if cfg.auto_height else cfg.octree_height,
                        truncation=cfg.truncation, feature_dim=cfg.feature_dim,
                        n_feature_levels=cfg.n_feature_levels, seed=cfg.seed)
    lo, hi = points.min(axis=0), points.max(axis=0)
    decoders = FieldDecoders(cfg, center=(lo + hi) / 2.0,
                             half_extent=max(float(np.max(hi - lo)) / 2.0, 1.0),
                             seed=cfg.seed)
    bank = build_ray_bank(ds, frames, make_color_views_fn(ds))
    log.info("octree: height %d, %d leaf cells, %d returns",
             grid.height, grid.n_cells(grid.height - 1), len(bank.endpoints))

    rng = np.random.default_rng(cfg.seed)
    opt = Adam([("field", grid.parameters() + decoders.parameters(), cfg.lr)])
    history = []
    snapshot = None
    t0 = time.time()
    for it in range(cfg.iterations):
        batch = sample_rays(bank, cfg, rng)
        loss, parts = field_loss(batch, grid, decoders, cfg, rng)
        if not np.isfinite(parts["total"]):
            if snapshot is not None:
                _restore_params(grid, decoders, snapshot)
            raise NumericFailure(
                f"field loss non-finite at iteration {it}; restored snapshot from "
                f"iteration {it - it % 250}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if it % 250 == 0:
            snapshot = _snapshot_params(grid, decoders)
        if it % 50 == 0 or it == cfg.iterations - 1:
            parts["iteration"] = it
            parts["wall_s"] = time.time() - t0
            history.append(parts)
            if progress:
                progress(it, parts)
    return grid, decoders, history


def _snapshot_params(grid, decoders):
    return [p.data.copy() for p in grid.parameters() + decoders.parameters()]


def _restore_params(grid, decoders, snapshot):
    for p, d in zip(grid.parameters() + decoders.parameters(), snapshot):
        p.data = d.copy()


def save_field(path, grid, decoders):
    tensors = {f"octree.feat{lv}": grid.features[lv].data for lv in grid.feature_levels}
    tensors.update(decoders.state_dict())
    tensors["meta.center"] = decoders.center.astype(np.float32)
    tensors["meta.half_extent"] = np.array([decoders.half_extent], dtype=np.float32)
    tensors["meta.arch"] = np.array(
        [decoders.bands, decoders.sdf_mlp.widths[1]], dtype=np.float32)
    save_checkpoint(path, tensors, sections={"OCTO": grid.topology_blob()})


def load_field(path):
    tensors, sections = load_checkpoint(path)
    if "OCTO" not in sections:
        raise IOError(f"{path}: missing octree topology section")
    grid = OctreeFeatureGrid.from_topology_blob(sections["OCTO"])
    for lv in grid.feature_levels:
        grid.features[lv].data = tensors[f"octree.feat{lv}"]
    bands = int(tensors["meta.arch"][0])
    hidden = int(tensors["meta.arch"][1])
    cfg = FieldConfig(bands=bands, hidden=hidden, feature_dim=grid.feature_dim,
                      n_feature_levels=grid.n_feature_levels, leaf_voxel=grid.leaf_voxel)
    decoders = FieldDecoders(cfg, center=tensors["meta.center"].astype(np.float64),
                             half_extent=float(tensors["meta.half_extent"][0]))
    decoders.load_state_dict(tensors)
    return grid, decoders
