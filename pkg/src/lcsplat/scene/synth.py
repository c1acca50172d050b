"""Procedural scene generation and sensor simulation.

Desk-scale stand-in for a drive log: an analytic scene (exact SDF + albedo)
is swept by a simulated spinning LiDAR and rendered by pinhole cameras into
ground-truth RGB / depth / sky-mask frames.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .camera import CameraModel, LidarModel, LidarSweep
from .primitives import Box, Ground, RoomShell, Scene, Sphere
from .transforms import invert_rigid, make_transform, rot_z


class SceneConfigError(ValueError):
    pass


@dataclass
class SceneSpec:
    kind: str = "urban"            # urban | sphere | room
    extent: float = 44.0           # street length for urban, span otherwise
    n_boxes: int = 10              # buildings / clutter count
    n_cameras: int = 3
    n_frames: int = 100
    width: int = 128
    height: int = 128
    fov_deg: float = 70.0
    lidar_lines: int = 32
    lidar_azimuth_steps: int = 360
    lidar_max_range: float = 60.0
    far_clip: float = 120.0

    def validate(self):
        if self.n_cameras < 1:
            raise SceneConfigError("need at least one camera")
        if self.n_frames < 1:
            raise SceneConfigError("need at least one frame")
        if self.kind not in ("urban", "sphere", "room"):
            raise SceneConfigError(f"unknown scene kind {self.kind!r}")


def _camera_rig(yaw, pos, spec):
    """Camera mounted on the vehicle; extrinsics = vehicle-to-camera."""
    cz = np.array([np.cos(yaw), np.sin(yaw), 0.0])       # optical axis, vehicle frame
    cx = np.array([np.sin(yaw), -np.cos(yaw), 0.0])      # image right
    cy = np.cross(cz, cx)                                # image down
    R = np.stack([cx, cy, cz], axis=0)
    E = make_transform(R, -R @ np.asarray(pos, dtype=np.float64))
    f = spec.width / (2.0 * np.tan(np.deg2rad(spec.fov_deg) / 2.0))
    return CameraModel(fx=f, fy=f, cx=spec.width / 2.0, cy=spec.height / 2.0,
                       width=spec.width, height=spec.height, extrinsics=E,
                       name=f"yaw{np.rad2deg(yaw):+.0f}")


def _striped(base, axis, period, lo=0.72, hi=1.0):
    base = np.asarray(base)

    def fn(p):
        band = np.floor(p[:, axis] / period).astype(np.int64) % 2
        fac = np.where(band == 0, lo, hi)
        return np.clip(base * fac[:, None], 0.02, 0.98)

    return fn


def _road_albedo(p):
    rgb = np.full((p.shape[0], 3), 0.30)
    dashed = (np.abs(p[:, 1]) < 0.18) & (np.mod(p[:, 0], 4.0) < 2.2)
    rgb[dashed] = (0.88, 0.85, 0.70)
    coarse = (np.floor(p[:, 0] / 6.0) + np.floor(p[:, 1] / 6.0)).astype(np.int64) % 2
    rgb[:, :] *= np.where(coarse == 0, 1.0, 0.85)[:, None]
    return rgb


def _urban_scene(rng, spec):
    prims = [Ground(0.0, albedo=_road_albedo)]
    half_len = spec.extent / 2.0
    palette = np.array([
        [0.75, 0.35, 0.30], [0.35, 0.55, 0.80], [0.80, 0.70, 0.35],
        [0.45, 0.70, 0.45], [0.70, 0.45, 0.70], [0.55, 0.55, 0.60],
    ])
    per_side = max(spec.n_boxes // 2, 1)
    for side in (-1.0, 1.0):
        xs = np.linspace(-half_len + 4.0, half_len - 4.0, per_side)
        for x in xs:
            w = rng.uniform(2.5, 4.5)
            d = rng.uniform(2.0, 3.5)
            h = rng.uniform(3.0, 7.0)
            y = side * (5.5 + d)
            color = palette[rng.integers(len(palette))] * rng.uniform(0.8, 1.1)
            prims.append(Box((x + rng.uniform(-1.0, 1.0), y, h - 0.01), (w, d, h),
                             yaw=rng.uniform(-0.08, 0.08),
                             albedo=_striped(color, axis=2, period=1.2)))
    # street-level clutter: parked-car sized boxes
    for k in range(max(spec.n_boxes // 3, 2)):
        x = rng.uniform(-half_len + 6.0, half_len - 6.0)
        side = 1.0 if k % 2 == 0 else -1.0
        color = palette[rng.integers(len(palette))] * 0.9
        prims.append(Box((x, side * 3.4, 0.74), (2.1, 0.85, 0.75),
                         yaw=rng.uniform(-0.05, 0.05),
                         albedo=_striped(color, axis=0, period=0.9)))
    lo = (-half_len - 8.0, -16.0, -1.0)
    hi = (half_len + 8.0, 16.0, 16.0)
    return Scene(prims, (lo, hi))


def _sphere_scene(rng, spec):
    prims = [
        Ground(0.0, albedo=_road_albedo),
        Sphere((0.0, 0.0, 2.2), 2.0, albedo=_striped((0.80, 0.45, 0.35), axis=2, period=0.8)),
    ]
    r = spec.extent / 2.0
    lo = (-r - 6.0, -r - 6.0, -1.0)
    hi = (r + 6.0, r + 6.0, 10.0)
    return Scene(prims, (lo, hi))


def _room_scene(rng, spec):
    half = spec.extent / 2.0
    prims = [
        RoomShell((0.0, 0.0, 2.5), (half, half, 2.5),
                  albedo=_striped((0.75, 0.72, 0.66), axis=2, period=0.9)),
        Box((half * 0.45, half * 0.4, 0.6), (0.6, 0.6, 0.6),
            albedo=_striped((0.30, 0.50, 0.75), axis=0, period=0.4)),
        Box((-half * 0.45, -half * 0.35, 0.45), (0.5, 0.5, 0.45), yaw=0.5,
            albedo=_striped((0.75, 0.40, 0.30), axis=1, period=0.4)),
    ]
    lo = (-half - 1.0, -half - 1.0, -1.0)
    hi = (half + 1.0, half + 1.0, 6.0)
    return Scene(prims, (lo, hi))


def _urban_trajectory(spec):
    half = spec.extent / 2.0
    xs = np.linspace(-half + 6.0, half - 6.0, spec.n_frames)
    poses = []
    for x in xs:
        y = 0.8 * np.sin(2 * np.pi * x / 36.0)
        dy = 0.8 * np.cos(2 * np.pi * x / 36.0) * (2 * np.pi / 36.0)
        yaw = np.arctan2(dy, 1.0)
        poses.append(make_transform(rot_z(yaw), (x, y, 0.0)))
    return poses


def _orbit_trajectory(spec, radius):
    angles = np.linspace(0.0, 2 * np.pi, spec.n_frames, endpoint=False)
    poses = []
    for a in angles:
        pos = (radius * np.cos(a), radius * np.sin(a), 0.0)
        yaw = a + np.pi / 2.0  # tangent, counter-clockwise
        poses.append(make_transform(rot_z(yaw), pos))
    return poses


def synth_scene(seed, spec):
    """Build (scene, trajectory, camera rigs, lidar model) for a spec.

    Deterministic in (seed, spec). Camera rig extrinsics are
    vehicle-to-camera; pose them with posed_camera().
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    if spec.kind == "urban":
        scene = _urban_scene(rng, spec)
        trajectory = _urban_trajectory(spec)
        cam_yaws = [0.0, np.deg2rad(50.0), np.deg2rad(-50.0), np.deg2rad(180.0)]
    elif spec.kind == "sphere":
        scene = _sphere_scene(rng, spec)
        trajectory = _orbit_trajectory(spec, spec.extent / 2.0 - 2.0)
        cam_yaws = [np.deg2rad(90.0), 0.0, np.deg2rad(-90.0), np.deg2rad(180.0)]
    else:
        scene = _room_scene(rng, spec)
        trajectory = _orbit_trajectory(spec, spec.extent / 4.0)
        cam_yaws = [0.0, np.deg2rad(120.0), np.deg2rad(-120.0), np.deg2rad(180.0)]
    if spec.n_cameras > len(cam_yaws):
        raise SceneConfigError(f"at most {len(cam_yaws)} cameras supported")
    rigs = [_camera_rig(cam_yaws[i], (0.6, 0.0, 1.6), spec) for i in range(spec.n_cameras)]
    for i, rig in enumerate(rigs):
        rig.name = f"cam{i}"
    lidar = LidarModel(n_lines=spec.lidar_lines, azimuth_steps=spec.lidar_azimuth_steps,
                       max_range=spec.lidar_max_range,
                       vehicle_from_lidar=make_transform(np.eye(3), (0.0, 0.0, 2.0)))
    return scene, trajectory, rigs, lidar


def posed_camera(rig, vehicle_pose):
    """Rig (vehicle-to-camera) + vehicle pose (vehicle-to-world) -> posed camera."""
    return rig.with_extrinsics(rig.extrinsics @ invert_rigid(vehicle_pose))


def simulate_lidar(scene, vehicle_pose, lidar, frame=0):
    """One simulated sweep; rays that miss or exceed range give no return."""
    sensor_to_world = vehicle_pose @ lidar.vehicle_from_lidar
    origin = sensor_to_world[:3, 3]
    dirs = lidar.ray_directions() @ sensor_to_world[:3, :3].T
    t, _ = scene.intersect(origin, dirs)
    keep = np.isfinite(t) & (t <= lidar.max_range)
    points = origin + t[keep, None] * dirs[keep]
    return LidarSweep(points=points, origin=origin, frame=frame)


def render_gt_views(scene, cam, far_clip=120.0):
    """Exact render: (rgb f32 [0,1], z-depth f32 with 0 = sky, sky mask u8)."""
    origin, dirs = cam.pixel_rays()
    flat = dirs.reshape(-1, 3)
    t, idx = scene.intersect(origin, flat)
    hit = np.isfinite(t) & (t <= far_clip)
    points = origin + t[hit, None] * flat[hit]
    rgb = np.tile(scene.sky_color, (flat.shape[0], 1)).astype(np.float32)
    rgb[hit] = scene.shade(points, idx[hit])
    depth = np.zeros(flat.shape[0], dtype=np.float32)
    depth[hit] = t[hit]
    sky = (~hit).astype(np.uint8)
    H, W = cam.height, cam.width
    return rgb.reshape(H, W, 3), depth.reshape(H, W), sky.reshape(H, W)


def lidar_point_colors(points, views, occlusion_slack=0.1):
    """Color LiDAR points from the view whose camera center is nearest.

    views: list of (CameraModel, rgb image, gt depth image). A point is
    occluded in a view when the view's depth at its pixel is more than
    occlusion_slack nearer than the point's own z. Returns (colors (N, 3),
    has_color (N,) bool). Ties on distance go to the earliest view passed.
    """
    pts = np.atleast_2d(points).astype(np.float64)
    n = pts.shape[0]
    best_d = np.full(n, np.inf)
    colors = np.zeros((n, 3), dtype=np.float32)
    has = np.zeros(n, dtype=bool)
    for cam, image, depth in views:
        uv, z, ok = cam.project(pts)
        if not np.any(ok):
            continue
        px = np.clip(uv[ok, 0].astype(np.int64), 0, cam.width - 1)
        py = np.clip(uv[ok, 1].astype(np.int64), 0, cam.height - 1)
        dimg = depth[py, px]
        visible = ~((dimg > 0) & (dimg < z[ok] - occlusion_slack))
        cam_dist = np.linalg.norm(pts[ok] - cam.center, axis=1)
        better = visible & (cam_dist < best_d[ok])
        sel = np.flatnonzero(ok)[better]
        best_d[sel] = cam_dist[better]
        colors[sel] = image[py[better], px[better]]
        has[sel] = True
    return colors, has


def lidar_point_color(p, views):
    """Single-point wrapper over lidar_point_colors: RGB or None."""
    colors, has = lidar_point_colors(np.asarray(p)[None], views)
    return colors[0] if has[0] else None


def spec_to_dict(spec):
    return asdict(spec)


def spec_from_dict(d):
    return SceneSpec(**d)
