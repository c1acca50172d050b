"""Rigid-transform and quaternion helpers (4x4 row-major, right-handed)."""

import numpy as np


def make_transform(R, t):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return T


def invert_rigid(T):
    R = T[:3, :3]
    t = T[:3, 3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ t
    return out


def apply_transform(T, points):
    """T (4,4) applied to points (..., 3)."""
    p = np.asarray(points)
    return p @ T[:3, :3].T + T[:3, 3]


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def is_orthonormal(R, tol=1e-5):
    return np.linalg.norm(R.T @ R - np.eye(3)) < tol


def quat_to_matrix(q):
    """Unit quaternions (..., 4) wxyz -> rotation matrices (..., 3, 3)."""
    q = np.asarray(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=q.dtype)
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quat_from_two_vectors(a, b):
    """Quaternions (..., 4) wxyz rotating unit vectors a onto unit vectors b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    xyz = np.cross(a, b)
    w = 1.0 + np.einsum("...i,...i->...", a, b)
    q = np.concatenate([w[..., None], xyz], axis=-1)
    # antiparallel case: pick any perpendicular axis
    bad = w < 1e-8
    if np.any(bad):
        perp = np.cross(a[bad], np.where(np.abs(a[bad, :1]) < 0.9,
                                         np.array([1.0, 0, 0]), np.array([0, 1.0, 0])))
        perp /= np.linalg.norm(perp, axis=-1, keepdims=True)
        q[bad] = np.concatenate([np.zeros((bad.sum(), 1)), perp], axis=-1)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)
