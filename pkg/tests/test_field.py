import numpy as np
import pytest

import lcsplat.field.loss as loss_mod
from lcsplat import diffmath as dm
from lcsplat.field import (FieldConfig, FieldDecoders, RaySampleBatch, build_octree,
                           bce_from_predictions, decode_rgb, decode_sdf, decode_values,
                           field_loss, flat_sigmoid, load_field, positional_encode,
                           sample_rays, save_field, train_field)
from lcsplat.field.sampling import RayBank
from lcsplat.scene import SceneSpec, generate_dataset
from fd_oracle import numeric_grad, max_rel_error


def test_single_point_octree_has_one_leaf_and_full_ancestry():
    grid = build_octree(np.array([[1.0, 2.0, 0.5]]), leaf_voxel=0.25,
                        truncation=0.0, margin=2.0)
    assert grid.n_cells(grid.height - 1) == 1
    for lv in range(grid.height):
        assert grid.n_cells(lv) == 1  # single chain of ancestors


def test_two_points_same_voxel_same_nodes():
    a = build_octree(np.array([[1.0, 1.0, 1.0]]), leaf_voxel=0.5, truncation=0.0,
                     margin=2.0, height=5)
    b = build_octree(np.array([[1.0, 1.0, 1.0], [1.05, 1.1, 1.15]]),
                     leaf_voxel=0.5, truncation=0.0, margin=2.0, height=5)
    for lv in range(a.height):
        np.testing.assert_array_equal(a.level_codes[lv], b.level_codes[lv])


def test_paper_default_configuration():
    cfg = FieldConfig()
    assert cfg.leaf_voxel == 0.2
    assert cfg.n_feature_levels == 3
    assert cfg.feature_dim == 8
    assert cfg.octree_height == 12
    rng = np.random.default_rng(0)
    grid = build_octree(rng.uniform(0, 4, size=(50, 3)), leaf_voxel=cfg.leaf_voxel,
                        truncation=0.3, feature_dim=cfg.feature_dim,
                        n_feature_levels=cfg.n_feature_levels)
    assert grid.feature_levels == [grid.height - 3, grid.height - 2, grid.height - 1]
    assert all(grid.features[lv].data.shape[1] == 8 for lv in grid.feature_levels)


def test_every_child_has_occupied_parent():
    rng = np.random.default_rng(1)
    grid = build_octree(rng.uniform(0, 6, size=(200, 3)), leaf_voxel=0.3, truncation=0.3)
    for lv in range(1, grid.height):
        parents = np.unique(grid.level_codes[lv] >> np.uint64(3))
        assert np.all(np.isin(parents, grid.level_codes[lv - 1]))


def _tiny_grid():
    pts = np.array([[0.5, 0.5, 0.5]])
    return build_octree(pts, leaf_voxel=1.0, truncation=0.0, margin=1.6, n_feature_levels=1)


def test_interp_exact_at_corner_and_center():
    grid = _tiny_grid()
    lv = grid.height - 1
    size = grid.cell_size(lv)
    ix, iy, iz = [c[0] for c in
                  __import__("lcsplat.field.octree", fromlist=["morton_decode"]).morton_decode(grid.level_codes[lv])]
    corner_world = grid.origin + np.array([ix, iy, iz]) * size
    f = grid.interp_features(corner_world[None], lv)
    row = grid.cell_corners[lv][0, 0]
    np.testing.assert_allclose(f.data[0], grid.features[lv].data[row], atol=1e-6)

    center = corner_world + size / 2.0
    f_center = grid.interp_features(center[None], lv)
    mean8 = grid.features[lv].data[grid.cell_corners[lv][0]].mean(axis=0)
    np.testing.assert_allclose(f_center.data[0], mean8, atol=1e-6)


def test_interp_reproduces_linear_fields_and_is_continuous():
    # trilinear interpolation is exact for linear functions of position,
    # which also forces weights to be a partition of unity
    rng = np.random.default_rng(4)
    grid = build_octree(rng.uniform(0, 3, size=(60, 3)), leaf_voxel=0.5,
                        truncation=0.5, n_feature_levels=1, feature_dim=3)
    lv = grid.feature_levels[0]
    from lcsplat.field.octree import morton_decode
    cx, cy, cz = morton_decode(grid.corner_codes[lv])
    corner_pos = grid.origin + np.stack([cx, cy, cz], axis=1) * grid.cell_size(lv)
    coef = np.array([[0.3, -1.2, 0.7], [2.0, 0.1, -0.4], [0.0, 1.0, 1.0]])
    grid.features[lv].data = (corner_pos @ coef.T).astype(np.float32)
    probes = []
    for _ in range(500):
        p = rng.uniform(0, 3, size=3)
        if grid._lookup(lv, np.floor((p[None] - grid.origin) / grid.cell_size(lv)).astype(np.int64))[0] >= 0:
            probes.append(p)
    probes = np.array(probes)
    got = grid.interp_features(probes, lv).data
    np.testing.assert_allclose(got, probes @ coef.T, rtol=1e-4, atol=1e-4)


def test_interp_outside_occupancy_is_zero():
    grid = _tiny_grid()
    lv = grid.feature_levels[0]
    far = grid.origin + 1000.0
    f = grid.interp_features(far[None], lv)
    np.testing.assert_array_equal(f.data, np.zeros((1, grid.feature_dim)))


def test_positional_encode_shapes_and_origin():
    enc = positional_encode(np.zeros((1, 3)), bands=4)
    assert enc.shape == (1, 3 + 6 * 4)
    np.testing.assert_allclose(enc[0, :3], 0.0)
    sins = enc[0, 3::1].reshape(4, 2, 3)[:, 0, :]
    coss = enc[0, 3::1].reshape(4, 2, 3)[:, 1, :]
    np.testing.assert_allclose(sins, 0.0)
    np.testing.assert_allclose(coss, 1.0)
    assert positional_encode(np.ones((2, 3)), bands=0).shape == (2, 3)


def test_decoders_zero_weights_give_bias_and_rgb_range():
    grid = _tiny_grid()
    cfg = FieldConfig(feature_dim=grid.feature_dim, n_feature_levels=1)
    dec = FieldDecoders(cfg, center=(0.5, 0.5, 0.5), half_extent=2.0)
    for w in dec.sdf_mlp.weights:
        w.data[:] = 0
    dec.sdf_mlp.biases[-1].data[:] = 0.37
    pts = np.random.default_rng(0).uniform(0, 1, size=(10, 3))
    s = decode_sdf(grid, dec, pts)
    np.testing.assert_allclose(s.data, 0.37, atol=1e-6)
    c = decode_rgb(grid, dec, pts)
    assert np.all((c.data > 0) & (c.data < 1))


def test_flat_sigmoid_properties():
    xs = np.linspace(-1, 1, 101)
    s = flat_sigmoid(xs, 0.05)
    assert abs(flat_sigmoid(0.0, 0.05) - 0.5) < 1e-12
    assert np.all(np.diff(s) < 0)  # monotone decreasing


def test_bce_minimum_is_binary_entropy():
    targets = flat_sigmoid(np.array([-0.2, -0.05, 0.0, 0.1, 0.25]), 0.05)
    pred = dm.Tensor(targets.astype(np.float32))
    val = float(bce_from_predictions(pred, targets).data)
    t = targets
    entropy = float(np.mean(-(t * np.log(t) + (1 - t) * np.log(1 - t))))
    assert abs(val - entropy) < 1e-5
    # any other prediction is worse
    off = dm.Tensor(np.clip(targets + 0.1, 1e-6, 1 - 1e-6).astype(np.float32))
    assert float(bce_from_predictions(off, targets).data) > val


def _stub_batch(rng, n=64):
    pts = rng.uniform(0, 2, size=(n, 3))
    return RaySampleBatch(points=pts, sdf_targets=rng.uniform(-0.3, 0.3, n).astype(np.float32),
                          ray_ids=np.arange(n), color_rows=np.array([], dtype=int),
                          color_targets=np.zeros((0, 3), dtype=np.float32))


def test_eikonal_zero_for_unit_slope_field(monkeypatch):
    grid = _tiny_grid()
    cfg = FieldConfig(feature_dim=grid.feature_dim, n_feature_levels=1, grad_subset=32)
    dec = FieldDecoders(cfg, center=(0, 0, 0), half_extent=1.0)
    n_hat = np.array([1.0, 2.0, 2.0]) / 3.0

    def affine_sdf(grid_, dec_, pts):
        return dm.Tensor((pts @ n_hat + 0.3).astype(np.float32))

    monkeypatch.setattr(loss_mod, "decode_sdf", affine_sdf)
    rng = np.random.default_rng(0)
    _, parts = field_loss(_stub_batch(rng), grid, dec, cfg, rng)
    assert parts["eik"] < 1e-8
    assert parts["smooth"] < 1e-8


def test_constant_field_eikonal_one_smooth_zero(monkeypatch):
    grid = _tiny_grid()
    cfg = FieldConfig(feature_dim=grid.feature_dim, n_feature_levels=1, grad_subset=32)
    dec = FieldDecoders(cfg, center=(0, 0, 0), half_extent=1.0)

    def const_sdf(grid_, dec_, pts):
        return dm.Tensor(np.full(len(pts), 0.7, dtype=np.float32))

    monkeypatch.setattr(loss_mod, "decode_sdf", const_sdf)
    rng = np.random.default_rng(0)
    _, parts = field_loss(_stub_batch(rng), grid, dec, cfg, rng)
    assert abs(parts["eik"] - 1.0) < 1e-6
    assert parts["smooth"] < 1e-12


def test_field_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0.2, 1.4, size=(12, 3))
    grid = build_octree(pts, leaf_voxel=0.4, truncation=0.2, n_feature_levels=2,
                        feature_dim=4, seed=1)
    cfg = FieldConfig(feature_dim=4, n_feature_levels=2, bands=2, hidden=8,
                      grad_subset=6, lambda_rgb=1.0)
    dec = FieldDecoders(cfg, center=pts.mean(axis=0), half_extent=2.0, seed=3)
    # promote everything to float64 so the oracle is meaningful
    params = grid.parameters() + dec.parameters()
    for p in params:
        p.data = p.data.astype(np.float64)
    batch = RaySampleBatch(points=pts,
                           sdf_targets=rng.uniform(-0.2, 0.2, 12).astype(np.float32),
                           ray_ids=np.arange(12), color_rows=np.array([0, 3]),
                           color_targets=rng.uniform(0.2, 0.8, (2, 3)).astype(np.float32))

    def run():
        rng_local = np.random.default_rng(77)
        loss, _ = field_loss(batch, grid, dec, cfg, rng_local)
        return loss

    loss = run()
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    arrays = [p.data.copy() for p in params]

    def f(*vals):
        for p, v in zip(params, vals):
            p.data = v.astype(np.float64)
        with dm.no_grad():
            out = float(run().data)
        return out

    num = numeric_grad(f, arrays, h=1e-4)
    for p, v in zip(params, arrays):
        p.data = v
    assert max_rel_error(analytic, num, floor=1e-3) < 1e-3


def test_sample_rays_conventions():
    rng = np.random.default_rng(5)
    n = 40
    ends = rng.uniform(-2, 2, size=(n, 3))
    origins = ends + np.array([0.0, 0.0, 5.0])
    bank = RayBank(endpoints=ends, origins=origins,
                   colors=rng.uniform(0, 1, (n, 3)).astype(np.float32),
                   has_color=np.ones(n, dtype=bool))
    cfg = FieldConfig(truncation=0.3, samples_per_ray=6, rays_per_batch=16)
    batch = sample_rays(bank, cfg, rng)
    assert np.all(np.abs(batch.sdf_targets) <= cfg.truncation + 1e-7)
    # first sample of each ray is the exact endpoint with target 0
    k = cfg.samples_per_ray
    np.testing.assert_allclose(batch.sdf_targets[::k], 0.0)
    np.testing.assert_allclose(batch.points[::k], ends[batch.ray_ids[::k]], atol=1e-12)
    # positive target = sensor side = closer to the origin than the endpoint
    d_point = np.linalg.norm(batch.points - origins[batch.ray_ids], axis=1)
    d_end = np.linalg.norm(ends[batch.ray_ids] - origins[batch.ray_ids], axis=1)
    pos = batch.sdf_targets > 1e-9
    assert np.all(d_point[pos] < d_end[pos])
    neg = batch.sdf_targets < -1e-9
    assert np.all(d_point[neg] > d_end[neg])
    # color targets attach to endpoint samples only
    assert np.all(batch.color_rows % k == 0)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    spec = SceneSpec(kind="sphere", extent=16.0, n_cameras=1, n_frames=8,
                     width=48, height=36, lidar_lines=12, lidar_azimuth_steps=90,
                     lidar_max_range=25.0, fov_deg=75.0)
    return generate_dataset(spec, seed=9, out_dir=tmp_path_factory.mktemp("ds") / "sphere")


def _short_cfg(**kw):
    base = dict(leaf_voxel=0.4, sigma=0.1, truncation=0.4, iterations=120,
                rays_per_batch=256, grad_subset=64, hidden=32, bands=4, seed=0)
    base.update(kw)
    return FieldConfig(**base)


def test_train_field_loss_decreases(tiny_dataset):
    grid, dec, history = train_field(tiny_dataset, _short_cfg())
    assert history[-1]["total"] < history[0]["total"]


def test_train_field_rgb_frozen_when_lambda_zero(tiny_dataset):
    cfg = _short_cfg(iterations=30, lambda_rgb=0.0)
    grid, dec, _ = train_field(tiny_dataset, cfg)
    fresh = FieldDecoders(cfg, center=dec.center, half_extent=dec.half_extent, seed=cfg.seed)
    for got, init in zip(dec.rgb_mlp.parameters(), fresh.rgb_mlp.parameters()):
        np.testing.assert_array_equal(got.data, init.data)


def test_train_field_deterministic(tiny_dataset):
    cfg = _short_cfg(iterations=40)
    _, _, h1 = train_field(tiny_dataset, cfg)
    _, _, h2 = train_field(tiny_dataset, cfg)
    assert abs(h1[-1]["total"] - h2[-1]["total"]) < 1e-6


def test_field_checkpoint_roundtrip(tiny_dataset, tmp_path):
    grid, dec, _ = train_field(tiny_dataset, _short_cfg(iterations=20))
    path = tmp_path / "field.tclc"
    save_field(path, grid, dec)
    grid2, dec2 = load_field(path)
    pts = np.random.default_rng(1).uniform(-3, 3, size=(50, 3))
    np.testing.assert_allclose(decode_values(grid, dec, pts),
                               decode_values(grid2, dec2, pts), atol=1e-6)
