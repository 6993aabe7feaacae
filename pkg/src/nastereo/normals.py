"""Surface normal estimation.

Two extraction paths share the same local-plane-fit core:

- ``normals_from_depth`` unprojects a window of valid depth pixels to 3D and
  takes the smallest principal direction of the centered point set, the
  standard way of generating reference normal maps from clean depth.
- ``normals_from_volume`` works on the correspondence probability volume.
  Each depth slice contributes a vector whose direction is the weighted
  plane fit of the patch's expected 3D points restricted to that slice's
  depth neighborhood and whose magnitude is the pixel's slice probability;
  the contributions are summed over slices and the sum normalized.

Normals face the camera (n . ray < 0), so fronto-parallel surfaces get
n = (0, 0, -1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .camera import CameraIntrinsics
from .maps import DepthMap, NormalMap
from .sweep import ProbabilityVolume

__all__ = [
    "VolumeNormalConfig",
    "angle_between",
    "normals_from_depth",
    "normals_from_volume",
]

_EIG_RATIO = 1e-9  # mid/max eigenvalue ratio below which a fit is degenerate


@dataclass(frozen=True)
class VolumeNormalConfig:
    """Patch and slice-neighborhood sizes for volume-based extraction."""

    patch_radius: int = 2
    slice_radius: int = 2
    min_slice_prob: float = 1e-8

    def __post_init__(self):
        if self.patch_radius < 1:
            raise ValueError("patch_radius must be at least 1")
        if self.slice_radius < 0:
            raise ValueError("slice_radius must be non-negative")


def angle_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angle in degrees between unit vectors, batched over leading dims."""
    dot = np.clip(np.sum(np.asarray(a) * np.asarray(b), axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(dot))


def _orient_to_camera(normals: np.ndarray, rays: np.ndarray) -> np.ndarray:
    flip = np.sum(normals * rays, axis=-1) > 0
    return np.where(flip[..., None], -normals, normals)


def _smallest_direction(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit eigenvector of the smallest eigenvalue of symmetric 3x3 stacks.

    Returns (directions, ok); fits whose mid eigenvalue is negligible
    relative to the largest are flagged degenerate (collinear points).
    """
    vals, vecs = np.linalg.eigh(cov)
    direction = vecs[..., :, 0]
    ok = vals[..., 1] > _EIG_RATIO * np.maximum(vals[..., 2], 0.0)
    ok &= vals[..., 2] > 0
    return direction, ok


def normals_from_depth(
    depth: DepthMap, k: CameraIntrinsics, window: int = 5
) -> NormalMap:
    """Per-pixel least-squares plane normals from a depth map.

    The window's valid pixels are unprojected to 3D and a plane is fit by
    taking the smallest principal direction of the centered points.  Windows
    straddling a depth discontinuity (range larger than 3x the window extent
    times the median adjacent-pixel step) are trimmed to the pixels on the
    center pixel's side.  Pixels with fewer than 3 usable points, a
    degenerate neighborhood, or an invalid center are masked.

    Args:
        depth: Input depth map.
        k: Intrinsics of the camera that produced the depth map.
        window: Odd window size >= 3.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and at least 3")
    r = window // 2
    h, w = depth.z.shape

    zp = np.zeros((h + 2 * r, w + 2 * r), dtype=np.float64)
    zp[r : r + h, r : r + w] = np.where(depth.valid, depth.z, 0.0)
    vp = np.zeros((h + 2 * r, w + 2 * r), dtype=bool)
    vp[r : r + h, r : r + w] = depth.valid

    zw = sliding_window_view(zp, (window, window))  # (H, W, w, w)
    vw = sliding_window_view(vp, (window, window))

    # Discontinuity detection: median absolute step between adjacent valid
    # pixels inside the window sets the local smooth-variation scale.
    du = np.abs(zw[..., :, 1:] - zw[..., :, :-1])
    du_ok = vw[..., :, 1:] & vw[..., :, :-1]
    dv = np.abs(zw[..., 1:, :] - zw[..., :-1, :])
    dv_ok = vw[..., 1:, :] & vw[..., :-1, :]
    import warnings as _warnings

    with _warnings.catch_warnings():
        # Windows with no valid pairs produce all-NaN slices; masked below.
        _warnings.simplefilter("ignore", RuntimeWarning)
        # Per-direction medians, then averaged: partial windows at the image
        # border would otherwise let the direction with more pairs (often
        # all-zero steps) swamp the median and fake a discontinuity.
        spacing_u = np.nanmedian(np.where(du_ok, du, np.nan).reshape(h, w, -1), axis=-1)
        spacing_v = np.nanmedian(np.where(dv_ok, dv, np.nan).reshape(h, w, -1), axis=-1)
        z_masked = np.where(vw, zw, np.nan)
        z_range = np.nanmax(z_masked, axis=(-2, -1)) - np.nanmin(z_masked, axis=(-2, -1))
    spacing_u = np.where(np.isfinite(spacing_u), spacing_u, 0.0)
    spacing_v = np.where(np.isfinite(spacing_v), spacing_v, 0.0)
    spacing = 0.5 * (spacing_u + spacing_v)
    z_range = np.where(np.isfinite(z_range), z_range, 0.0)
    threshold = 3.0 * (2 * r) * np.maximum(spacing, 1e-12)
    split = z_range > threshold

    zc = depth.z[..., None, None]
    near_center = np.abs(zw - zc) <= (0.5 * threshold)[..., None, None]
    weights = vw & np.where(split[..., None, None], near_center, True)
    weights = weights & depth.valid[..., None, None]  # center must be valid

    # Unproject every window sample; pixel coordinates come from the same
    # padded layout as the depth windows.
    uu = np.arange(-r, w + r, dtype=np.float64)
    vv = np.arange(-r, h + r, dtype=np.float64)
    uw = sliding_window_view(np.broadcast_to(uu, (h + 2 * r, w + 2 * r)), (window, window))
    vw_coord = sliding_window_view(
        np.broadcast_to(vv[:, None], (h + 2 * r, w + 2 * r)), (window, window)
    )
    px = zw * (uw - k.uc) / k.fx
    py = zw * (vw_coord - k.vc) / k.fy
    points = np.stack([px, py, zw], axis=-1)  # (H, W, w, w, 3)

    wt = weights.astype(np.float64)[..., None]
    count = weights.reshape(h, w, -1).sum(axis=-1)
    enough = count >= 3
    safe_count = np.maximum(count, 1.0)
    centroid = (points * wt).reshape(h, w, -1, 3).sum(axis=2) / safe_count[..., None]
    diff = points - centroid[..., None, None, :]
    weighted = (diff * wt).reshape(h, w, -1, 3)
    cov = np.einsum("hwpi,hwpj->hwij", weighted, diff.reshape(h, w, -1, 3))
    cov /= safe_count[..., None, None]

    direction, fit_ok = _smallest_direction(cov)
    u_grid, v_grid = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    rays = np.stack([(u_grid - k.uc) / k.fx, (v_grid - k.vc) / k.fy, np.ones_like(u_grid)], axis=-1)
    direction = _orient_to_camera(direction, rays)

    valid = depth.valid & enough & fit_ok
    n = np.where(valid[..., None], direction, 0.0)
    norms = np.linalg.norm(n, axis=-1, keepdims=True)
    n = np.where(valid[..., None], n / np.maximum(norms, 1e-300), 0.0)
    return NormalMap(n, valid)


def _box_sum_2d(x: np.ndarray, radius: int) -> np.ndarray:
    size = 2 * radius + 1
    h, w = x.shape
    padded = np.zeros((h + 2 * radius, w + 2 * radius), dtype=np.float64)
    padded[radius : radius + h, radius : radius + w] = x
    integral = np.zeros((h + 2 * radius + 1, w + 2 * radius + 1), dtype=np.float64)
    np.cumsum(np.cumsum(padded, axis=0), axis=1, out=integral[1:, 1:])
    return (
        integral[size:, size:]
        - integral[:-size, size:]
        - integral[size:, :-size]
        + integral[:-size, :-size]
    )


def normals_from_volume(
    pv: ProbabilityVolume, k: CameraIntrinsics, cfg: VolumeNormalConfig = VolumeNormalConfig()
) -> NormalMap:
    """Probability-weighted normal extraction from the volume.

    For each slice i the patch around a pixel is reduced to its expected 3D
    points under the probability mass within ``slice_radius`` planes of i,
    a weighted plane is fit, and the resulting unit direction is scaled by
    the pixel's probability at slice i.  The final normal is the normalized
    sum of all slice contributions; pixels whose contributions cancel below
    1e-8 are masked.
    """
    h, w, d = pv.prob.shape
    planes = pv.planes
    u_grid, v_grid = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    ru = (u_grid - k.uc) / k.fx
    rv = (v_grid - k.vc) / k.fy
    rays = np.stack([ru, rv, np.ones_like(ru)], axis=-1)

    acc = np.zeros((h, w, 3), dtype=np.float64)
    for i in range(d):
        center_p = pv.prob[:, :, i]
        active = center_p > cfg.min_slice_prob
        if not active.any():
            continue
        lo = max(0, i - cfg.slice_radius)
        hi = min(d, i + cfg.slice_radius + 1)
        w_loc = pv.prob[:, :, lo:hi].sum(axis=2)
        z_loc = pv.prob[:, :, lo:hi] @ planes[lo:hi]
        has_mass = w_loc > cfg.min_slice_prob
        z_exp = np.where(has_mass, z_loc / np.where(has_mass, w_loc, 1.0), 0.0)
        wq = np.where(has_mass, w_loc, 0.0)

        x = z_exp * ru
        y = z_exp * rv
        m0 = _box_sum_2d(wq, cfg.patch_radius)
        mx = _box_sum_2d(wq * x, cfg.patch_radius)
        my = _box_sum_2d(wq * y, cfg.patch_radius)
        mz = _box_sum_2d(wq * z_exp, cfg.patch_radius)
        mxx = _box_sum_2d(wq * x * x, cfg.patch_radius)
        mxy = _box_sum_2d(wq * x * y, cfg.patch_radius)
        mxz = _box_sum_2d(wq * x * z_exp, cfg.patch_radius)
        myy = _box_sum_2d(wq * y * y, cfg.patch_radius)
        myz = _box_sum_2d(wq * y * z_exp, cfg.patch_radius)
        mzz = _box_sum_2d(wq * z_exp * z_exp, cfg.patch_radius)

        usable = active & (m0 > cfg.min_slice_prob)
        if not usable.any():
            continue
        idx = np.nonzero(usable)
        n0 = m0[idx]
        mux = mx[idx] / n0
        muy = my[idx] / n0
        muz = mz[idx] / n0
        cov = np.empty((n0.size, 3, 3), dtype=np.float64)
        cov[:, 0, 0] = mxx[idx] / n0 - mux * mux
        cov[:, 0, 1] = cov[:, 1, 0] = mxy[idx] / n0 - mux * muy
        cov[:, 0, 2] = cov[:, 2, 0] = mxz[idx] / n0 - mux * muz
        cov[:, 1, 1] = myy[idx] / n0 - muy * muy
        cov[:, 1, 2] = cov[:, 2, 1] = myz[idx] / n0 - muy * muz
        cov[:, 2, 2] = mzz[idx] / n0 - muz * muz

        direction, fit_ok = _smallest_direction(cov)
        direction = _orient_to_camera(direction, rays[idx])
        contrib = direction * (center_p[idx] * fit_ok)[:, None]
        acc[idx] += contrib

    norms = np.linalg.norm(acc, axis=-1)
    valid = pv.valid & (norms >= 1e-8)
    n = np.where(valid[..., None], acc / np.maximum(norms, 1e-300)[..., None], 0.0)
    return NormalMap(n, valid)
