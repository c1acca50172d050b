import numpy as np
import pytest

from lcsplat.scene import (Box, CameraModel, Dataset, DatasetError, Ground,
                           LidarModel, Scene, SceneSpec, SceneConfigError,
                           generate_dataset, holdout_split, lidar_point_color,
                           lidar_point_colors, load_dataset, posed_camera,
                           project_point, render_gt_views, save_dataset,
                           simulate_lidar, synth_scene)
from lcsplat.scene.formats import FileFormatError, read_points_ply, write_points_ply
from lcsplat.scene.transforms import make_transform, rot_z


def small_spec(kind="room", frames=3):
    return SceneSpec(kind=kind, extent=8.0, n_boxes=4, n_cameras=2, n_frames=frames,
                     width=32, height=24, lidar_lines=8, lidar_azimuth_steps=48,
                     lidar_max_range=30.0)


def test_room_scene_box_center_sdf_is_minus_half_extent():
    scene, _, _, _ = synth_scene(1, small_spec())
    box = scene.primitives[1]
    assert abs(scene.sdf(box.center[None])[0] - (-min(box.half))) < 1e-9


def test_synth_scene_deterministic():
    spec = small_spec()
    scene_a, traj_a, rigs_a, lidar_a = synth_scene(5, spec)
    scene_b, traj_b, rigs_b, lidar_b = synth_scene(5, spec)
    sweep_a = simulate_lidar(scene_a, traj_a[0], lidar_a)
    sweep_b = simulate_lidar(scene_b, traj_b[0], lidar_b)
    np.testing.assert_array_equal(sweep_a.points, sweep_b.points)
    cam_a = posed_camera(rigs_a[0], traj_a[1])
    cam_b = posed_camera(rigs_b[0], traj_b[1])
    np.testing.assert_array_equal(render_gt_views(scene_a, cam_a)[0],
                                  render_gt_views(scene_b, cam_b)[0])


def test_lidar_endpoints_lie_on_surfaces():
    spec = small_spec(kind="urban")
    spec.extent = 30.0
    scene, traj, _, lidar = synth_scene(3, spec)
    sweep = simulate_lidar(scene, traj[1], lidar)
    assert len(sweep.points) > 100
    sdf = scene.sdf(sweep.points.astype(np.float64))
    assert np.max(np.abs(sdf)) < 1e-4


def test_zero_cameras_rejected():
    spec = small_spec()
    spec.n_cameras = 0
    with pytest.raises(SceneConfigError):
        synth_scene(0, spec)


def test_single_ray_hits_plane_at_range():
    wall = Box((6.0, 0.0, 0.0), (1.0, 50.0, 50.0))
    scene = Scene([wall], bounds=((-10, -10, -10), (10, 10, 10)))
    lidar = LidarModel(n_lines=1, azimuth_steps=1, elevation_min_deg=0.0,
                       elevation_max_deg=0.0, max_range=30.0)
    sweep = simulate_lidar(scene, np.eye(4), lidar)
    assert sweep.points.shape == (1, 3)
    dist = np.linalg.norm(sweep.points[0] - sweep.origin)
    assert abs(dist - 5.0) < 1e-5


def test_ray_into_sky_gives_no_return():
    scene = Scene([Ground(0.0)], bounds=((-10, -10, -1), (10, 10, 10)))
    lidar = LidarModel(n_lines=1, azimuth_steps=1, elevation_min_deg=30.0,
                       elevation_max_deg=30.0, max_range=100.0,
                       vehicle_from_lidar=make_transform(np.eye(3), (0, 0, 2.0)))
    sweep = simulate_lidar(scene, np.eye(4), lidar)
    assert sweep.points.shape == (0, 3)


def test_lidar_line_elevations_evenly_spaced():
    lidar = LidarModel(n_lines=32, azimuth_steps=4, elevation_min_deg=-25.0,
                       elevation_max_deg=5.0)
    dirs = lidar.ray_directions().reshape(32, 4, 3)
    els = np.rad2deg(np.arcsin(dirs[:, 0, 2]))
    np.testing.assert_allclose(np.diff(els), (5.0 - -25.0) / 31.0, atol=1e-9)


def test_gt_render_plane_depth_and_sky():
    wall = Box((0.0, 0.0, 6.0), (50.0, 50.0, 2.0))  # front face at z = 4
    scene = Scene([wall], bounds=((-60, -60, -60), (60, 60, 60)))
    cam = CameraModel(fx=40, fy=40, cx=16, cy=12, width=32, height=24)
    rgb, depth, sky = render_gt_views(scene, cam)
    assert rgb.shape == (24, 32, 3) and depth.shape == (24, 32)
    hit = sky == 0
    assert hit.all()  # wall covers the whole frustum
    np.testing.assert_allclose(depth[hit], 4.0, atol=1e-9)  # z-depth convention

    # clip the wall so corner rays miss: sky pixels get depth 0 / mask 1 / sky color
    small = Box((0.0, 0.0, 6.0), (1.0, 1.0, 2.0))
    scene2 = Scene([small], bounds=((-60, -60, -60), (60, 60, 60)))
    rgb2, depth2, sky2 = render_gt_views(scene2, cam)
    assert sky2.any()
    assert np.all(depth2[sky2 == 1] == 0.0)
    np.testing.assert_allclose(rgb2[sky2 == 1],
                               np.broadcast_to(scene2.sky_color, (int((sky2 == 1).sum()), 3)),
                               atol=1e-6)

    rgb3, depth3, _ = render_gt_views(scene2, cam)
    np.testing.assert_array_equal(rgb2, rgb3)
    np.testing.assert_array_equal(depth2, depth3)


def test_project_point_on_axis():
    cam = CameraModel(fx=100, fy=100, cx=50, cy=50, width=100, height=100)
    res = project_point((0.0, 0.0, 2.0), cam)
    assert res is not None
    u, v, z = res
    assert (u, v) == (50.0, 50.0) and z == 2.0


def test_project_point_behind_camera():
    cam = CameraModel(fx=100, fy=100, cx=50, cy=50, width=100, height=100)
    assert project_point((0.0, 0.0, -1.0), cam) is None


def test_project_backproject_roundtrip():
    rng = np.random.default_rng(0)
    cam = CameraModel(fx=90, fy=85, cx=63.0, cy=60.0, width=128, height=120,
                      extrinsics=make_transform(rot_z(0.4), (1.0, -2.0, 0.5)))
    pts = rng.uniform(-1, 1, size=(200, 3)) * np.array([5, 5, 2]) + np.array([0, 0, 8])
    world = pts @ np.linalg.inv(cam.extrinsics[:3, :3]).T  # keep them roughly in view
    uv, z, ok = cam.project(world)
    assert ok.sum() > 50
    rec = cam.backproject(uv[ok], z[ok])
    np.testing.assert_allclose(rec, world[ok], atol=1e-5)


def _color_views():
    # two cameras staring at the origin plane from different ranges
    wall = Box((0.0, 0.0, 5.0), (50.0, 50.0, 1.0))
    scene = Scene([wall], bounds=((-60, -60, -60), (60, 60, 60)))
    cams = []
    for i, cz in enumerate((1.0, -3.0)):  # centers at z=1 (dist 3) and z=-3 (dist 7)
        E = make_transform(np.eye(3), (0, 0, -cz))
        cams.append(CameraModel(fx=30, fy=30, cx=16, cy=12, width=32, height=24,
                                extrinsics=E, name=f"cam{i}"))
    views = []
    for i, cam in enumerate(cams):
        rgb, depth, _ = render_gt_views(scene, cam)
        rgb = rgb.copy()
        rgb[:] = (0.2 + 0.3 * i, 0.5, 0.5)  # paint each view a distinct color
        views.append((cam, rgb, depth))
    return views


def test_point_color_prefers_nearest_camera():
    views = _color_views()
    p = (0.0, 0.0, 4.0)
    d0 = np.linalg.norm(np.asarray(p) - views[0][0].center)
    d1 = np.linalg.norm(np.asarray(p) - views[1][0].center)
    assert d0 < d1
    color = lidar_point_color(p, views)
    np.testing.assert_allclose(color, views[0][1][0, 0])
    # order of views must not matter
    color_flipped = lidar_point_color(p, views[::-1])
    np.testing.assert_allclose(color_flipped, color)


def test_point_color_none_when_behind_all():
    views = _color_views()
    assert lidar_point_color((0.0, 0.0, -10.0), views) is None


def test_point_color_occlusion():
    views = _color_views()
    # a point far behind the wall front face projects fine but is occluded
    cam, rgb, depth = views[0]
    p = (0.0, 0.0, 4.6)  # wall face at z=4 -> depth 4 < 4.6 - 0.1
    colors, has = lidar_point_colors(np.asarray(p)[None], [(cam, rgb, depth)])
    assert not has[0]


def test_point_color_single_visible_camera():
    views = _color_views()
    cam0 = views[0]
    p = (0.0, 0.0, 4.0)
    color = lidar_point_color(p, [cam0])
    np.testing.assert_allclose(color, cam0[1][0, 0])


def test_dataset_roundtrip(tmp_path):
    spec = small_spec(frames=3)
    ds = generate_dataset(spec, seed=2, out_dir=tmp_path / "d0")
    ds2 = save_dataset(ds, tmp_path / "d1")
    for a, b in zip(ds.trajectory, ds2.trajectory):
        assert np.max(np.abs(a - b)) < 1e-7
    np.testing.assert_array_equal(ds.load_image(0, 1), ds2.load_image(0, 1))
    np.testing.assert_array_equal(ds.load_sweep(2).points, ds2.load_sweep(2).points)
    np.testing.assert_array_equal(ds.load_sky(1, 0), ds2.load_sky(1, 0))


def test_truncated_ply_reports_offset(tmp_path):
    path = tmp_path / "sweep.ply"
    write_points_ply(path, np.ones((10, 3), dtype=np.float32), np.zeros(3))
    blob = path.read_bytes()
    path.write_bytes(blob[:-10])
    with pytest.raises(FileFormatError, match="byte"):
        read_points_ply(path)


def test_missing_lidar_dir(tmp_path):
    spec = small_spec(frames=2)
    ds = generate_dataset(spec, seed=2, out_dir=tmp_path / "d")
    import shutil
    shutil.rmtree(tmp_path / "d" / "lidar")
    with pytest.raises(DatasetError, match="lidar/ missing"):
        load_dataset(tmp_path / "d")


def test_lidar_depth_image_matches_projection(tmp_path):
    spec = small_spec(frames=2)
    ds = generate_dataset(spec, seed=4, out_dir=tmp_path / "d")
    depth = ds.lidar_depth_image(0, 0)
    assert depth.shape == (spec.height, spec.width)
    assert (depth > 0).sum() > 10
    cam = ds.camera(0, 0)
    pts = ds.load_sweep(0).points
    uv, z, ok = cam.project(pts)
    # every nonzero pixel's depth equals the nearest projected point there
    ys, xs = np.nonzero(depth)
    for y, x in list(zip(ys, xs))[:20]:
        sel = ok & (uv[:, 0].astype(int) == x) & (uv[:, 1].astype(int) == y)
        assert abs(depth[y, x] - z[sel].min()) < 1e-5


def test_holdout_split_protocol():
    train, test = holdout_split(100, seed=3)
    assert len(test) == 10
    for b, t in enumerate(test):
        assert 10 * b <= t < 10 * (b + 1)
    assert sorted(train + test) == list(range(100))
    assert holdout_split(100, seed=3) == holdout_split(100, seed=3)
