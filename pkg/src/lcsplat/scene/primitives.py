"""Analytic scene geometry: exact SDFs, exact ray hits, procedural albedo.

Scenes double as the ground-truth oracle for tests (exact signed distance
and color queries), so every primitive keeps its SDF exact, not approximate.
"""

import numpy as np

from .transforms import rot_z


class Box:
    """Solid box with optional yaw; exact SDF inside and out."""

    def __init__(self, center, half, yaw=0.0, albedo=None):
        self.center = np.asarray(center, dtype=np.float64)
        self.half = np.asarray(half, dtype=np.float64)
        self.yaw = float(yaw)
        self.R = rot_z(self.yaw)
        self.albedo_fn = albedo

    def _local(self, p):
        return (np.atleast_2d(p) - self.center) @ self.R

    def sdf(self, p):
        q = np.abs(self._local(p)) - self.half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def intersect(self, origin, dirs):
        o = self._local(origin)[0]
        d = np.atleast_2d(dirs) @ self.R
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (-self.half - o) * inv
            t2 = (self.half - o) * inv
        tmin = np.nanmax(np.minimum(t1, t2), axis=-1)
        tmax = np.nanmin(np.maximum(t1, t2), axis=-1)
        t = np.where(tmin > 1e-9, tmin, tmax)
        hit = (tmin <= tmax) & (tmax > 1e-9) & (t > 1e-9)
        return np.where(hit, t, np.inf)

    def albedo(self, p):
        if self.albedo_fn is not None:
            return self.albedo_fn(np.atleast_2d(p))
        return np.full((np.atleast_2d(p).shape[0], 3), 0.6)


class RoomShell:
    """Infinite solid with a box-shaped cavity (an interior room).

    SDF is the negated cavity-box SDF, which stays exact everywhere.
    """

    def __init__(self, center, half, albedo=None):
        self.cavity = Box(center, half)
        self.albedo_fn = albedo

    def sdf(self, p):
        return -self.cavity.sdf(p)

    def intersect(self, origin, dirs):
        # from inside the cavity the wall hit is the cavity exit point
        o = self.cavity._local(origin)[0]
        d = np.atleast_2d(dirs) @ self.cavity.R
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (-self.cavity.half - o) * inv
            t2 = (self.cavity.half - o) * inv
        tmax = np.nanmin(np.maximum(t1, t2), axis=-1)
        return np.where(tmax > 1e-9, tmax, np.inf)

    def albedo(self, p):
        if self.albedo_fn is not None:
            return self.albedo_fn(np.atleast_2d(p))
        return np.full((np.atleast_2d(p).shape[0], 3), 0.7)


class Sphere:
    def __init__(self, center, radius, albedo=None):
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)
        self.albedo_fn = albedo

    def sdf(self, p):
        return np.linalg.norm(np.atleast_2d(p) - self.center, axis=-1) - self.radius

    def intersect(self, origin, dirs):
        d = np.atleast_2d(dirs)
        oc = origin - self.center
        a = np.einsum("...i,...i->...", d, d)
        b = 2.0 * d @ oc
        c = oc @ oc - self.radius ** 2
        disc = b * b - 4 * a * c
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t0 = (-b - sq) / (2 * a)
        t1 = (-b + sq) / (2 * a)
        t = np.where(t0 > 1e-9, t0, t1)
        return np.where(ok & (t > 1e-9), t, np.inf)

    def albedo(self, p):
        if self.albedo_fn is not None:
            return self.albedo_fn(np.atleast_2d(p))
        return np.full((np.atleast_2d(p).shape[0], 3), 0.6)


class Ground:
    """Solid half-space below z = height."""

    def __init__(self, height=0.0, albedo=None):
        self.height = float(height)
        self.albedo_fn = albedo

    def sdf(self, p):
        return np.atleast_2d(p)[:, 2] - self.height

    def intersect(self, origin, dirs):
        d = np.atleast_2d(dirs)
        dz = d[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.height - origin[2]) / dz
        return np.where((np.abs(dz) > 1e-12) & (t > 1e-9), t, np.inf)

    def albedo(self, p):
        if self.albedo_fn is not None:
            return self.albedo_fn(np.atleast_2d(p))
        return np.full((np.atleast_2d(p).shape[0], 3), 0.45)


class Scene:
    """Union of primitives plus lighting and sky conventions."""

    def __init__(self, primitives, bounds, sky_color=(0.55, 0.70, 0.92),
                 sun_dir=(0.30, 0.25, 0.92), ambient=0.35):
        self.primitives = list(primitives)
        self.bounds = (np.asarray(bounds[0], dtype=np.float64),
                       np.asarray(bounds[1], dtype=np.float64))
        self.sky_color = np.asarray(sky_color, dtype=np.float32)
        sd = np.asarray(sun_dir, dtype=np.float64)
        self.sun_dir = sd / np.linalg.norm(sd)
        self.ambient = float(ambient)

    def sdf(self, points):
        p = np.atleast_2d(points)
        vals = np.stack([prim.sdf(p) for prim in self.primitives], axis=0)
        return vals.min(axis=0)

    def normals(self, points, h=1e-4):
        p = np.atleast_2d(points)
        n = np.empty_like(p, dtype=np.float64)
        for ax in range(3):
            dp = np.zeros(3)
            dp[ax] = h
            n[:, ax] = self.sdf(p + dp) - self.sdf(p - dp)
        norm = np.linalg.norm(n, axis=-1, keepdims=True)
        return n / np.maximum(norm, 1e-12)

    def intersect(self, origin, dirs):
        """Nearest hit along rays from a shared origin.

        Returns (t, prim_index) with t = inf and index = -1 on miss. t is in
        units of the (possibly non-unit) direction vectors.
        """
        d = np.atleast_2d(dirs)
        best_t = np.full(d.shape[0], np.inf)
        best_i = np.full(d.shape[0], -1, dtype=np.int32)
        for i, prim in enumerate(self.primitives):
            t = prim.intersect(origin, d)
            closer = t < best_t
            best_t = np.where(closer, t, best_t)
            best_i = np.where(closer, i, best_i)
        return best_t, best_i

    def shade(self, points, prim_idx):
        """Albedo times a simple Lambert term under the fixed sun."""
        p = np.atleast_2d(points)
        rgb = np.zeros((p.shape[0], 3))
        for i, prim in enumerate(self.primitives):
            sel = prim_idx == i
            if np.any(sel):
                rgb[sel] = prim.albedo(p[sel])
        lam = np.maximum(self.normals(p) @ self.sun_dir, 0.0)
        rgb = rgb * (self.ambient + (1.0 - self.ambient) * lam)[:, None]
        return np.clip(rgb, 0.0, 1.0).astype(np.float32)
