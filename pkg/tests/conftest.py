"""Shared scene fixtures and mask helpers."""

from __future__ import annotations

import numpy as np
import pytest

from nastereo.camera import CameraIntrinsics, CameraPose
from nastereo.consistency import correlate3
from nastereo.scenegen import (
    NoiseTexture,
    PlaneSurface,
    SceneSpec,
    SphereSurface,
    render,
)


def make_intrinsics(fx=100.0, fy=100.0, uc=63.5, vc=63.5) -> CameraIntrinsics:
    return CameraIntrinsics(fx=fx, fy=fy, uc=uc, vc=vc)


def render_plane(a_x=0.5, a_y=0.0, b=2.0, size=128, k=None, texture=None, cameras=None):
    k = k or make_intrinsics(uc=(size - 1) / 2.0, vc=(size - 1) / 2.0)
    cameras = cameras or [(k, CameraPose.identity())]
    spec = SceneSpec(
        surface=PlaneSurface(a_x, a_y, b),
        texture=texture or NoiseTexture(seed=7),
        image_size=(size, size),
        cameras=cameras,
    )
    return render(spec)


def render_sphere(center=(0.0, 0.0, 4.0), radius=1.0, size=128, k=None, texture=None):
    k = k or make_intrinsics(uc=(size - 1) / 2.0, vc=(size - 1) / 2.0)
    spec = SceneSpec(
        surface=SphereSurface(center, radius),
        texture=texture or NoiseTexture(seed=7),
        image_size=(size, size),
        cameras=[(k, CameraPose.identity())],
    )
    return render(spec)


def erode(mask: np.ndarray, steps: int = 1) -> np.ndarray:
    out = mask.copy()
    for _ in range(steps):
        out = correlate3(out.astype(np.float64), np.ones((3, 3))) > 8.5
    return out


def sphere_interior(view, k, cutoff_deg=60.0, erosion=2) -> np.ndarray:
    """Pixels at viewing angle below the cutoff, eroded away from the rim."""
    h, w = view.depth_gt.z.shape
    u, v = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    rays = np.stack([(u - k.uc) / k.fx, (v - k.vc) / k.fy, np.ones_like(u)], axis=-1)
    rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
    cosang = -np.sum(view.normal_gt.n * rays, axis=-1)
    mask = view.depth_gt.valid & (cosang > np.cos(np.radians(cutoff_deg)))
    return erode(mask, erosion)


@pytest.fixture(scope="session")
def plane_view():
    """Slanted plane (Z = 0.5 X + 2) at 128x128, fx = fy = 100."""
    return render_plane()[0]


@pytest.fixture(scope="session")
def sphere_view():
    """Unit sphere at (0, 0, 4), 128x128, fx = fy = 100."""
    return render_sphere()[0]


@pytest.fixture(scope="session")
def cam128():
    return make_intrinsics()
