"""Pinhole camera and LiDAR sensor models."""

from dataclasses import dataclass, field

import numpy as np

from .transforms import invert_rigid, is_orthonormal


class CalibrationError(ValueError):
    pass


@dataclass
class CameraModel:
    """Pinhole camera: intrinsics in pixels, extrinsics = world-to-camera.

    Camera frame follows the usual computer-vision convention: x right,
    y down, z forward (optical axis). Depth everywhere means camera-frame
    z, not ray length.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsics: np.ndarray = field(default_factory=lambda: np.eye(4))
    name: str = "cam"
    z_near: float = 0.05

    def __post_init__(self):
        self.extrinsics = np.asarray(self.extrinsics, dtype=np.float64)
        if self.fx <= 0 or self.fy <= 0:
            raise CalibrationError(f"{self.name}: focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise CalibrationError(f"{self.name}: principal point outside image")
        if not is_orthonormal(self.extrinsics[:3, :3]):
            raise CalibrationError(f"{self.name}: extrinsic rotation not orthonormal")

    @property
    def center(self):
        """Camera center in world coordinates."""
        return invert_rigid(self.extrinsics)[:3, 3]

    def with_extrinsics(self, E):
        return CameraModel(self.fx, self.fy, self.cx, self.cy, self.width,
                           self.height, E, self.name, self.z_near)

    def project(self, points):
        """Project world points (N, 3).

        Returns (uv (N, 2), z (N,), ok (N,) bool); ok is False behind the
        near plane or outside image bounds. uv are continuous pixel
        coordinates, pixel (i, j) covering [j, j+1) x [i, i+1).
        """
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        pc = p @ self.extrinsics[:3, :3].T + self.extrinsics[:3, 3]
        z = pc[:, 2]
        safe = np.where(z > self.z_near, z, 1.0)
        u = self.fx * pc[:, 0] / safe + self.cx
        v = self.fy * pc[:, 1] / safe + self.cy
        ok = (z > self.z_near) & (u >= 0) & (u < self.width) & (v >= 0) & (v < self.height)
        return np.stack([u, v], axis=1), z, ok

    def backproject(self, uv, z):
        """Pixel coords + camera-frame z back to world points."""
        uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        x = (uv[:, 0] - self.cx) / self.fx * z
        y = (uv[:, 1] - self.cy) / self.fy * z
        pc = np.stack([x, y, z], axis=1)
        T = invert_rigid(self.extrinsics)
        return pc @ T[:3, :3].T + T[:3, 3]

    def pixel_rays(self):
        """World-space (origin, dirs (H, W, 3)) with dirs scaled so that the
        ray parameter equals camera z-depth (camera-frame z of dir is 1)."""
        ii, jj = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        u = jj + 0.5
        v = ii + 0.5
        d = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)
        T = invert_rigid(self.extrinsics)
        return T[:3, 3].copy(), d @ T[:3, :3].T


def project_point(p, cam):
    """Single-point convenience wrapper: (u, v, z) or None if out of view."""
    uv, z, ok = cam.project(np.asarray(p, dtype=np.float64)[None])
    if not ok[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1]), float(z[0])


@dataclass
class LidarModel:
    """Spinning multi-line LiDAR: evenly spaced elevation lines, uniform azimuth."""

    n_lines: int = 32
    azimuth_steps: int = 360
    elevation_min_deg: float = -25.0
    elevation_max_deg: float = 5.0
    max_range: float = 60.0
    vehicle_from_lidar: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        self.vehicle_from_lidar = np.asarray(self.vehicle_from_lidar, dtype=np.float64)

    def ray_directions(self):
        """Unit directions (n_lines * azimuth_steps, 3) in the sensor frame
        (x forward, y left, z up)."""
        el = np.deg2rad(np.linspace(self.elevation_min_deg, self.elevation_max_deg, self.n_lines))
        az = np.arange(self.azimuth_steps) * (2 * np.pi / self.azimuth_steps)
        el_g, az_g = np.meshgrid(el, az, indexing="ij")
        ce = np.cos(el_g)
        return np.stack([ce * np.cos(az_g), ce * np.sin(az_g), np.sin(el_g)], axis=-1).reshape(-1, 3)


@dataclass
class LidarSweep:
    """One revolution worth of returns, in world coordinates."""

    points: np.ndarray          # (N, 3) float32 world-frame endpoints
    origin: np.ndarray          # (3,) sensor center, world frame
    frame: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float32).reshape(-1, 3)
        self.origin = np.asarray(self.origin, dtype=np.float32).reshape(3)
