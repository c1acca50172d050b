"""On-disk dataset layout and the read-only handle used by all stages.

Layout under a dataset root:
  calib.json                      cameras, lidar extrinsics, sky color
  trajectory.json                 vehicle poses, row-major 4x4
  images/cam{K}/{frame:06}.ppm    binary P6 ground-truth RGB
  lidar/{frame:06}.ply            binary LE xyz f32 + sensor origin f32
  sky/cam{K}/{frame:06}.pgm       binary P5, 255 = sky
  depth_mesh/cam{K}/{frame:06}.f32  raw LE f32 z-depth (written by render-depth)
"""

import json
import os
import shutil
from dataclasses import dataclass

import numpy as np

from .camera import CameraModel, LidarModel, LidarSweep
from .formats import read_pgm, read_points_ply, read_ppm, read_f32, write_f32, \
    write_pgm, write_points_ply, write_ppm
from .synth import SceneSpec, posed_camera, render_gt_views, simulate_lidar, \
    spec_from_dict, spec_to_dict, synth_scene
from .transforms import invert_rigid


class DatasetError(IOError):
    pass


@dataclass
class FrameBundle:
    """Everything one (camera, frame) pair contributes to training/eval."""

    rgb: np.ndarray           # (H, W, 3) float32 in [0, 1]
    lidar_depth: np.ndarray   # (H, W) float32 sparse z-depth, 0 = no return
    mesh_depth: np.ndarray    # (H, W) float32 dense z-depth, 0 = sky/miss (or None)
    sky: np.ndarray           # (H, W) uint8 in {0, 1}
    camera: CameraModel       # posed (world-to-camera extrinsics)
    cam_id: int
    frame: int


class Dataset:
    """Read-only handle; everything heavier than calibration loads lazily."""

    def __init__(self, root):
        self.root = str(root)
        calib_path = os.path.join(self.root, "calib.json")
        traj_path = os.path.join(self.root, "trajectory.json")
        for p in (calib_path, traj_path):
            if not os.path.exists(p):
                raise DatasetError(f"{p} missing")
        if not os.path.isdir(os.path.join(self.root, "lidar")):
            raise DatasetError(f"{self.root}: lidar/ missing")
        if not os.path.isdir(os.path.join(self.root, "images")):
            raise DatasetError(f"{self.root}: images/ missing")
        with open(calib_path) as f:
            calib = json.load(f)
        with open(traj_path) as f:
            traj = json.load(f)
        self.rigs = []
        for entry in calib["cameras"]:
            self.rigs.append(CameraModel(
                fx=entry["fx"], fy=entry["fy"], cx=entry["cx"], cy=entry["cy"],
                width=entry["width"], height=entry["height"],
                extrinsics=np.array(entry["cam_from_vehicle"]).reshape(4, 4),
                name=entry["name"]))
        lid = calib["lidar"]
        self.lidar = LidarModel(
            n_lines=lid["n_lines"], azimuth_steps=lid["azimuth_steps"],
            elevation_min_deg=lid["elevation_min_deg"], elevation_max_deg=lid["elevation_max_deg"],
            max_range=lid["max_range"],
            vehicle_from_lidar=np.array(lid["vehicle_from_lidar"]).reshape(4, 4))
        self.sky_color = np.array(calib.get("sky_color", [0.0, 0.0, 0.0]), dtype=np.float32)
        self.synth_meta = calib.get("synth")
        self.trajectory = [np.array(p).reshape(4, 4) for p in traj["poses"]]
        self.n_frames = len(self.trajectory)
        self.n_cameras = len(self.rigs)

    # ---- paths

    def _img_path(self, cam_id, frame):
        return os.path.join(self.root, "images", f"cam{cam_id}", f"{frame:06}.ppm")

    def _sky_path(self, cam_id, frame):
        return os.path.join(self.root, "sky", f"cam{cam_id}", f"{frame:06}.pgm")

    def _lidar_path(self, frame):
        return os.path.join(self.root, "lidar", f"{frame:06}.ply")

    def _mesh_depth_path(self, cam_id, frame):
        return os.path.join(self.root, "depth_mesh", f"cam{cam_id}", f"{frame:06}.f32")

    # ---- loaders

    def camera(self, cam_id, frame):
        return posed_camera(self.rigs[cam_id], self.trajectory[frame])

    def load_image(self, cam_id, frame):
        return read_ppm(self._img_path(cam_id, frame)).astype(np.float32) / 255.0

    def load_sky(self, cam_id, frame):
        return (read_pgm(self._sky_path(cam_id, frame)) > 127).astype(np.uint8)

    def load_sweep(self, frame):
        path = self._lidar_path(frame)
        if not os.path.exists(path):
            raise DatasetError(f"{path} missing")
        pts, org = read_points_ply(path)
        return LidarSweep(points=pts, origin=org[0] if len(org) else np.zeros(3), frame=frame)

    def has_mesh_depth(self):
        return os.path.isdir(os.path.join(self.root, "depth_mesh"))

    def load_mesh_depth(self, cam_id, frame):
        path = self._mesh_depth_path(cam_id, frame)
        if not os.path.exists(path):
            raise DatasetError(f"dense depth missing: run render-depth ({path})")
        rig = self.rigs[cam_id]
        return read_f32(path, (rig.height, rig.width))

    def save_mesh_depth(self, cam_id, frame, depth):
        path = self._mesh_depth_path(cam_id, frame)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        write_f32(path, depth)

    def lidar_depth_image(self, cam_id, frame):
        """Sparse z-depth by projecting the frame's sweep; nearest point wins."""
        cam = self.camera(cam_id, frame)
        sweep = self.load_sweep(frame)
        depth = np.zeros((cam.height, cam.width), dtype=np.float32)
        if len(sweep.points) == 0:
            return depth
        uv, z, ok = cam.project(sweep.points)
        px = uv[ok, 0].astype(np.int64)
        py = uv[ok, 1].astype(np.int64)
        big = np.full(depth.shape, np.inf, dtype=np.float32)
        np.minimum.at(big, (py, px), z[ok].astype(np.float32))
        hit = np.isfinite(big)
        depth[hit] = big[hit]
        return depth

    def frame_bundle(self, cam_id, frame, need_mesh_depth=False):
        mesh_depth = None
        if need_mesh_depth:
            mesh_depth = self.load_mesh_depth(cam_id, frame)
        elif self.has_mesh_depth() and os.path.exists(self._mesh_depth_path(cam_id, frame)):
            mesh_depth = self.load_mesh_depth(cam_id, frame)
        return FrameBundle(
            rgb=self.load_image(cam_id, frame),
            lidar_depth=self.lidar_depth_image(cam_id, frame),
            mesh_depth=mesh_depth,
            sky=self.load_sky(cam_id, frame),
            camera=self.camera(cam_id, frame),
            cam_id=cam_id, frame=frame)

    def merged_lidar_points(self, frames=None):
        """World-frame union of sweeps (already stored in world coordinates)."""
        frames = range(self.n_frames) if frames is None else frames
        parts = [self.load_sweep(f).points for f in frames]
        return np.concatenate(parts, axis=0)


def load_dataset(root):
    return Dataset(root)


def save_dataset(ds, out_dir):
    """Copy a dataset to a new root (bit-exact for binary payloads)."""
    os.makedirs(out_dir, exist_ok=True)
    _write_calib(out_dir, ds.rigs, ds.lidar, ds.sky_color, ds.synth_meta)
    _write_trajectory(out_dir, ds.trajectory)
    for sub in ("images", "sky", "lidar", "depth_mesh"):
        src = os.path.join(ds.root, sub)
        if os.path.isdir(src):
            dst = os.path.join(out_dir, sub)
            if os.path.exists(dst):
                shutil.rmtree(dst)
            shutil.copytree(src, dst)
    return Dataset(out_dir)


def _write_calib(out_dir, rigs, lidar, sky_color, synth_meta=None):
    calib = {
        "cameras": [{
            "name": rig.name, "fx": rig.fx, "fy": rig.fy, "cx": rig.cx, "cy": rig.cy,
            "width": rig.width, "height": rig.height,
            "cam_from_vehicle": [float(x) for x in rig.extrinsics.reshape(-1)],
        } for rig in rigs],
        "lidar": {
            "n_lines": lidar.n_lines, "azimuth_steps": lidar.azimuth_steps,
            "elevation_min_deg": lidar.elevation_min_deg,
            "elevation_max_deg": lidar.elevation_max_deg,
            "max_range": lidar.max_range,
            "vehicle_from_lidar": [float(x) for x in lidar.vehicle_from_lidar.reshape(-1)],
        },
        "sky_color": [float(c) for c in sky_color],
    }
    if synth_meta is not None:
        calib["synth"] = synth_meta
    with open(os.path.join(out_dir, "calib.json"), "w") as f:
        json.dump(calib, f, indent=1)


def _write_trajectory(out_dir, poses):
    data = {"poses": [[float(x) for x in p.reshape(-1)] for p in poses]}
    with open(os.path.join(out_dir, "trajectory.json"), "w") as f:
        json.dump(data, f)


def generate_dataset(spec, seed, out_dir):
    """Simulate a full drive and write it in the dataset layout."""
    scene, trajectory, rigs, lidar = synth_scene(seed, spec)
    os.makedirs(out_dir, exist_ok=True)
    _write_calib(out_dir, rigs, lidar, scene.sky_color,
                 synth_meta={"seed": seed, "spec": spec_to_dict(spec)})
    _write_trajectory(out_dir, trajectory)
    os.makedirs(os.path.join(out_dir, "lidar"), exist_ok=True)
    for cam_id in range(len(rigs)):
        os.makedirs(os.path.join(out_dir, "images", f"cam{cam_id}"), exist_ok=True)
        os.makedirs(os.path.join(out_dir, "sky", f"cam{cam_id}"), exist_ok=True)
    for frame, pose in enumerate(trajectory):
        sweep = simulate_lidar(scene, pose, lidar, frame=frame)
        write_points_ply(os.path.join(out_dir, "lidar", f"{frame:06}.ply"),
                         sweep.points, sweep.origin)
        for cam_id, rig in enumerate(rigs):
            cam = posed_camera(rig, pose)
            rgb, _, sky = render_gt_views(scene, cam, far_clip=spec.far_clip)
            write_ppm(os.path.join(out_dir, "images", f"cam{cam_id}", f"{frame:06}.ppm"), rgb)
            write_pgm(os.path.join(out_dir, "sky", f"cam{cam_id}", f"{frame:06}.pgm"), sky * 255)
    return Dataset(out_dir)


def rebuild_scene(ds):
    """Recreate the analytic scene a synthetic dataset was generated from."""
    if ds.synth_meta is None:
        raise DatasetError("dataset has no synthesis metadata")
    spec = spec_from_dict(ds.synth_meta["spec"])
    scene, _, _, _ = synth_scene(ds.synth_meta["seed"], spec)
    return scene, spec


def holdout_split(n_frames, seed):
    """Waymo-style split: one random test frame out of every block of ten."""
    rng = np.random.default_rng(seed)
    test = []
    for start in range(0, n_frames, 10):
        block = list(range(start, min(start + 10, n_frames)))
        test.append(int(rng.choice(block)))
    train = [f for f in range(n_frames) if f not in set(test)]
    return train, test
