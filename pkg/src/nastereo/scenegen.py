"""Analytic synthetic scenes with exact ground-truth depth and normals.

Scenes are textured planes or spheres defined in world coordinates and
rendered through calibrated cameras by exact ray-surface intersection.
Texture is sampled at the 3D intersection point, so multiple views of the
same scene are photoconsistent by construction.  Depth maps store
camera-frame Z; normal maps are exact surface gradients rotated into the
camera frame and oriented to face the camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .camera import CameraIntrinsics, CameraPose
from .maps import DepthMap, NormalMap

__all__ = [
    "PlaneSurface",
    "SphereSurface",
    "CheckerTexture",
    "NoiseTexture",
    "ConstantTexture",
    "SceneSpec",
    "RenderedView",
    "render",
    "add_depth_noise",
]


@dataclass(frozen=True)
class PlaneSurface:
    """Plane Z = a_x * X + a_y * Y + b in world coordinates."""

    a_x: float
    a_y: float
    b: float

    def intersect(self, origin: np.ndarray, rays: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Ray parameter t (= camera depth) where origin + t * rays hits the plane."""
        denom = self.a_x * rays[..., 0] + self.a_y * rays[..., 1] - rays[..., 2]
        numer = origin[2] - self.a_x * origin[0] - self.a_y * origin[1] - self.b
        ok = np.abs(denom) > 1e-12
        t = np.where(ok, numer / np.where(ok, denom, 1.0), -1.0)
        return t, ok & (t > 0)

    def normal_world(self, points: np.ndarray) -> np.ndarray:
        n = np.array([self.a_x, self.a_y, -1.0])
        n = n / np.linalg.norm(n)
        return np.broadcast_to(n, points.shape).copy()


@dataclass(frozen=True)
class SphereSurface:
    """Sphere with a world-space center and radius."""

    center: tuple[float, float, float]
    radius: float

    def intersect(self, origin: np.ndarray, rays: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q = origin - np.asarray(self.center, dtype=np.float64)
        a = np.sum(rays * rays, axis=-1)
        b = 2.0 * (rays @ q)
        c = q @ q - self.radius**2
        disc = b * b - 4.0 * a * c
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t = (-b - sq) / (2.0 * a)  # near intersection
        return t, ok & (t > 0)

    def normal_world(self, points: np.ndarray) -> np.ndarray:
        return (points - np.asarray(self.center, dtype=np.float64)) / self.radius


@dataclass(frozen=True)
class CheckerTexture:
    """3D checkerboard in world space with the given cell period in meters."""

    period: float = 0.1
    lo: float = 0.25
    hi: float = 0.75

    def sample(self, points: np.ndarray) -> np.ndarray:
        cells = np.floor(points / self.period).sum(axis=-1).astype(np.int64)
        return np.where(cells % 2 == 0, self.lo, self.hi)


@dataclass(frozen=True)
class NoiseTexture:
    """Smooth value noise: trilinear smoothstep interpolation of hashed lattice values."""

    seed: int = 0
    scale: float = 0.1

    def sample(self, points: np.ndarray) -> np.ndarray:
        p = points / self.scale
        i0 = np.floor(p).astype(np.int64)
        f = p - i0
        w = f * f * (3.0 - 2.0 * f)
        out = np.zeros(points.shape[:-1], dtype=np.float64)
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    corner = rng.hash_lattice(
                        i0[..., 0] + dx, i0[..., 1] + dy, i0[..., 2] + dz, self.seed
                    )
                    wx = w[..., 0] if dx else 1.0 - w[..., 0]
                    wy = w[..., 1] if dy else 1.0 - w[..., 1]
                    wz = w[..., 2] if dz else 1.0 - w[..., 2]
                    out += corner * wx * wy * wz
        return 0.1 + 0.8 * out


@dataclass(frozen=True)
class ConstantTexture:
    value: float = 0.5

    def sample(self, points: np.ndarray) -> np.ndarray:
        return np.full(points.shape[:-1], self.value, dtype=np.float64)


@dataclass
class SceneSpec:
    """Analytic scene: a surface, a texture, and the cameras observing it."""

    surface: PlaneSurface | SphereSurface
    texture: CheckerTexture | NoiseTexture | ConstantTexture = field(default_factory=NoiseTexture)
    image_size: tuple[int, int] = (128, 128)  # (width, height)
    cameras: list[tuple[CameraIntrinsics, CameraPose]] = field(default_factory=list)

    def __post_init__(self):
        if not self.cameras:
            raise ValueError("scene needs at least one camera")
        w, h = self.image_size
        if w < 2 or h < 2:
            raise ValueError(f"image_size must be at least 2x2, got {self.image_size}")
        for i, (k, pose) in enumerate(self.cameras):
            self._check_camera(i, k, pose)

    def _check_camera(self, i: int, k: CameraIntrinsics, pose: CameraPose) -> None:
        if isinstance(self.surface, SphereSurface):
            center_cam = pose.transform(np.asarray(self.surface.center, dtype=np.float64))
            if center_cam[2] <= self.surface.radius:
                raise ValueError(
                    f"camera {i}: sphere must lie entirely in front of the camera "
                    f"(center depth {center_cam[2]:.3f} <= radius {self.surface.radius:.3f})"
                )
            dist = np.linalg.norm(pose.center - np.asarray(self.surface.center))
            if dist <= self.surface.radius:
                raise ValueError(f"camera {i}: camera center lies inside the sphere")
        else:
            # The principal ray must hit the plane in front of the camera.
            ray = pose.rotation.T @ np.array([0.0, 0.0, 1.0])
            t, ok = self.surface.intersect(pose.center, ray[None, :])
            if not bool(ok[0]):
                raise ValueError(f"camera {i}: plane is not in front of the camera")


@dataclass
class RenderedView:
    """One rendered camera: grayscale image plus exact depth and normal maps."""

    image: np.ndarray
    depth_gt: DepthMap
    normal_gt: NormalMap
    intrinsics: CameraIntrinsics
    pose: CameraPose


def render(spec: SceneSpec) -> list[RenderedView]:
    """Render every camera in the scene.

    Background pixels (no ray-surface intersection in front of the camera)
    are masked in both maps and painted black in the image.
    """
    import warnings

    w, h = spec.image_size
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    views = []
    for k, pose in spec.cameras:
        # Camera-frame rays at unit depth, rotated to world; the ray
        # parameter then equals camera-frame depth Z.
        dirs_cam = np.stack([(u - k.uc) / k.fx, (v - k.vc) / k.fy, np.ones_like(u)], axis=-1)
        rays_w = dirs_cam @ pose.rotation  # = R^T applied to each ray
        origin = pose.center
        z, valid = spec.surface.intersect(origin, rays_w)
        if not valid.any():
            warnings.warn("rendered view has no surface intersection; fully masked")
        z_safe = np.where(valid, z, 1.0)
        points_w = origin + z_safe[..., None] * rays_w

        n_w = spec.surface.normal_world(points_w)
        n_cam = n_w @ pose.rotation.T
        # Orient normals toward the camera: n . ray < 0.
        flip = np.sum(n_cam * dirs_cam, axis=-1) > 0
        n_cam = np.where(flip[..., None], -n_cam, n_cam)
        norms = np.linalg.norm(n_cam, axis=-1, keepdims=True)
        n_cam = n_cam / np.maximum(norms, 1e-300)
        n_cam[~valid] = 0.0

        image = np.where(valid, spec.texture.sample(points_w), 0.0)
        views.append(
            RenderedView(
                image=image,
                depth_gt=DepthMap(z_safe, valid),
                normal_gt=NormalMap(n_cam, valid),
                intrinsics=k,
                pose=pose,
            )
        )
    return views


def add_depth_noise(depth: DepthMap, sigma: float, seed: int) -> DepthMap:
    """Perturb a depth map with i.i.d. Gaussian noise from the seeded stream.

    The output is clamped to stay strictly positive.  ``sigma == 0`` returns
    an identical copy.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return depth.copy()
    noise = rng.gaussians(seed, depth.z.size).reshape(depth.z.shape)
    z = np.maximum(depth.z + sigma * noise, 1e-6)
    return DepthMap(z, depth.valid.copy())
