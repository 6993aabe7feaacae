"""Pinhole camera model: projection, unprojection, and plane-induced warping.

Conventions used throughout the package:

- Image coordinates: ``u`` is the column, ``v`` is the row, with the origin
  at the center of the top-left pixel.  Both are continuous.
- Camera frame: X right, Y down, Z forward (the camera looks along +Z).
- Poses are stored world -> camera: ``x_cam = R @ x_world + t``.
- Pixel coordinates are passed around as arrays of shape ``(..., 2)``
  holding ``(u, v)``; 3D points as arrays of shape ``(..., 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "CameraIntrinsics",
    "CameraPose",
    "project",
    "unproject",
    "viewing_rays",
    "warp_plane",
    "relative_pose",
    "read_camera",
    "write_camera",
]

_ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    uc: float
    vc: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (np.isfinite(self.uc) and np.isfinite(self.vc)):
            raise ValueError("principal point must be finite")


@dataclass(frozen=True)
class CameraPose:
    """Rigid world -> camera transform: ``x_cam = rotation @ x_world + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r @ r.T, np.eye(3), atol=_ROTATION_TOL):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_center(cls, center, rotation=None) -> "CameraPose":
        """Pose of a camera whose optical center sits at ``center`` in world coords."""
        r = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        c = np.asarray(center, dtype=np.float64).reshape(3)
        return cls(r, -r @ c)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates (-R^T t)."""
        return -self.rotation.T @ self.translation

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the world -> camera transform to points of shape (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the camera -> world transform to points of shape (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return (p - self.translation) @ self.rotation


def project(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame 3D points to pixel coordinates.

    Args:
        points: Array of shape (..., 3) with Z > 0.
        k: Camera intrinsics.

    Returns:
        Array of shape (..., 2) holding (u, v).

    Raises:
        ValueError: if any point has non-positive depth.
    """
    p = np.asarray(points, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise ValueError("cannot project points with non-positive Z")
    u = k.fx * p[..., 0] / z + k.uc
    v = k.fy * p[..., 1] / z + k.vc
    return np.stack([u, v], axis=-1)


def unproject(pixels: np.ndarray, depth, k: CameraIntrinsics) -> np.ndarray:
    """Lift pixel coordinates to camera-frame 3D points at the given depth.

    Args:
        pixels: Array of shape (..., 2) holding (u, v).
        depth: Scalar or array broadcastable to the pixel batch shape; must be > 0.
        k: Camera intrinsics.

    Returns:
        Array of shape (..., 3) with X = Z(u-uc)/fx, Y = Z(v-vc)/fy, Z = depth.
    """
    px = np.asarray(pixels, dtype=np.float64)
    z = np.asarray(depth, dtype=np.float64)
    if np.any(z <= 0):
        raise ValueError("cannot unproject at non-positive depth")
    x = z * (px[..., 0] - k.uc) / k.fx
    y = z * (px[..., 1] - k.vc) / k.fy
    return np.stack([x, y, np.broadcast_to(z, x.shape).copy()], axis=-1)


def viewing_rays(pixels: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Unit-depth ray directions ((u-uc)/fx, (v-vc)/fy, 1) for pixels of shape (..., 2)."""
    px = np.asarray(pixels, dtype=np.float64)
    rx = (px[..., 0] - k.uc) / k.fx
    ry = (px[..., 1] - k.vc) / k.fy
    return np.stack([rx, ry, np.ones_like(rx)], axis=-1)


def relative_pose(pose_ref: CameraPose, pose_src: CameraPose) -> CameraPose:
    """Transform taking reference-camera coordinates to source-camera coordinates."""
    r = pose_src.rotation @ pose_ref.rotation.T
    t = pose_src.translation - r @ pose_ref.translation
    return CameraPose(r, t)


def warp_plane(
    pixels: np.ndarray,
    plane_depth: float,
    k_ref: CameraIntrinsics,
    k_src: CameraIntrinsics,
    pose_ref_to_src: CameraPose,
) -> tuple[np.ndarray, np.ndarray]:
    """Warp reference pixels into a source view via a fronto-parallel plane.

    Each pixel is unprojected at ``plane_depth`` in the reference frame,
    transformed by ``pose_ref_to_src``, and projected into the source view.
    Points that land behind the source camera are flagged invalid rather
    than raised on, since they routinely occur during plane sweeps.

    Args:
        pixels: Reference pixels, shape (..., 2).
        plane_depth: Depth of the sweep plane in the reference frame, > 0.
        k_ref: Reference intrinsics.
        k_src: Source intrinsics.
        pose_ref_to_src: Reference-frame -> source-frame transform.

    Returns:
        (warped, valid): warped pixels of shape (..., 2) and a boolean mask
        of shape (...). Entries with ``valid == False`` hold unusable
        coordinates and must be ignored.
    """
    if plane_depth <= 0:
        raise ValueError("plane_depth must be positive")
    p_ref = unproject(pixels, plane_depth, k_ref)
    p_src = pose_ref_to_src.transform(p_ref)
    z = p_src[..., 2]
    valid = z > 1e-12
    z_safe = np.where(valid, z, 1.0)
    u = k_src.fx * p_src[..., 0] / z_safe + k_src.uc
    v = k_src.fy * p_src[..., 1] / z_safe + k_src.vc
    return np.stack([u, v], axis=-1), valid


def write_camera(path, k: CameraIntrinsics, pose: CameraPose) -> None:
    """Write a camera to the plain-text format.

    Line 1: fx fy uc vc; lines 2-4: rotation rows; line 5: translation.
    """
    lines = ["%.17g %.17g %.17g %.17g" % (k.fx, k.fy, k.uc, k.vc)]
    for row in pose.rotation:
        lines.append("%.17g %.17g %.17g" % tuple(row))
    lines.append("%.17g %.17g %.17g" % tuple(pose.translation))
    Path(path).write_text("\n".join(lines) + "\n")


def read_camera(path) -> tuple[CameraIntrinsics, CameraPose]:
    """Read a camera from the plain-text format written by :func:`write_camera`."""
    tokens = Path(path).read_text().split()
    if len(tokens) != 16:
        raise ValueError(f"camera file {path}: expected 16 numbers, got {len(tokens)}")
    vals = [float(t) for t in tokens]
    k = CameraIntrinsics(fx=vals[0], fy=vals[1], uc=vals[2], vc=vals[3])
    r = np.array(vals[4:13], dtype=np.float64).reshape(3, 3)
    t = np.array(vals[13:16], dtype=np.float64)
    return k, CameraPose(r, t)
