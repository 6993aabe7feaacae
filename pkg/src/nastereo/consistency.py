"""Depth-normal consistency losses.

Two independent estimates of the depth map's spatial gradient in pixel
coordinates are compared:

- Estimate 1 applies a 3x3 Sobel filter to the depth map.  The raw Sobel
  response is divided by 8 so the output is in meters per pixel.
- Estimate 2 derives the same gradient from the normal map through the
  pinhole model:

      (dZ/du)_2 = (-n_x Z / (n_z f_x)) / (1 + n_x (u - u_c) / (n_z f_x)
                                            + n_y (v - v_c) / (n_z f_y))

  and analogously for dZ/dv with n_y and f_y in the numerator.

The pixel-space consistency loss is the Huber norm of the deviation between
the two estimates, mean-reduced over jointly valid pixels.  A world-space
baseline compares finite differences dZ/dX, dZ/dY against the tangent
slopes (-n_x/n_z, -n_y/n_z); unlike the pixel-space estimates, those slopes
carry no dependence on absolute depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics
from .maps import DepthMap, GradientField, NormalMap

__all__ = [
    "LossWeights",
    "LossBreakdown",
    "huber",
    "huber_mean",
    "SOBEL_U",
    "SOBEL_V",
    "correlate3",
    "grad_estimate_sobel",
    "grad_estimate_normal",
    "grad_estimate_tangent",
    "consistency_residuals",
    "loss_consistency_lc",
    "tangent_residuals",
    "loss_consistency_lt",
    "loss_total",
]

_NZ_EPS = 1e-6
_DENOM_EPS = 1e-6

# Correlation kernels, normalized so a unit ramp yields a unit gradient.
SOBEL_U = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0
SOBEL_V = SOBEL_U.T.copy()


@dataclass(frozen=True)
class LossWeights:
    """Weights of the composite training loss and the Huber transition point."""

    lambda_z: float = 0.7
    lambda_n: float = 3.0
    lambda_c: float = 1.0
    huber_delta: float = 1.0

    def __post_init__(self):
        if min(self.lambda_z, self.lambda_n, self.lambda_c) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    l_z: float
    l_n: float
    total: float


def huber(residual, delta: float = 1.0):
    """Elementwise Huber norm: 0.5 r^2 / delta inside delta, |r| - delta/2 outside."""
    r = np.abs(np.asarray(residual, dtype=np.float64))
    return np.where(r <= delta, 0.5 * r * r / delta, r - 0.5 * delta)


def huber_mean(residual, valid=None, delta: float = 1.0) -> float:
    """Huber applied elementwise and mean-reduced over valid entries."""
    r = np.asarray(residual, dtype=np.float64)
    if valid is None:
        valid = np.ones(r.shape, dtype=bool)
    if not np.any(valid):
        raise ValueError("empty valid set in loss reduction")
    return float(np.mean(huber(r[valid], delta)))


def correlate3(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 correlation with zero padding; border output is masked by callers."""
    h, w = x.shape
    xp = np.zeros((h + 2, w + 2), dtype=np.float64)
    xp[1:-1, 1:-1] = x
    out = np.zeros((h, w), dtype=np.float64)
    for di in range(3):
        for dj in range(3):
            kv = kernel[di, dj]
            if kv != 0.0:
                out += kv * xp[di : di + h, dj : dj + w]
    return out


def grad_estimate_sobel(depth: DepthMap) -> GradientField:
    """Estimate 1: depth gradient from the depth map via Sobel filtering.

    Pixels whose 3x3 support touches an invalid pixel or the image border
    are masked.
    """
    z = np.where(depth.valid, depth.z, 0.0)
    dzdu = correlate3(z, SOBEL_U)
    dzdv = correlate3(z, SOBEL_V)
    support = correlate3(depth.valid.astype(np.float64), np.ones((3, 3)))
    valid = support > 8.5  # all nine neighbors valid; borders fail via zero padding
    dzdu[~valid] = 0.0
    dzdv[~valid] = 0.0
    return GradientField(dzdu, dzdv, valid)


def _normal_grad_coefficients(
    normals: NormalMap, k: CameraIntrinsics, shape: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel coefficients c so that Estimate 2 equals c * Z, plus validity."""
    h, w = shape
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    n = normals.n
    nz_ok = np.abs(n[..., 2]) >= _NZ_EPS
    nz = np.where(nz_ok, n[..., 2], 1.0)
    ax = n[..., 0] / (nz * k.fx)
    ay = n[..., 1] / (nz * k.fy)
    denom = 1.0 + ax * (u - k.uc) + ay * (v - k.vc)
    denom_ok = np.abs(denom) >= _DENOM_EPS
    denom = np.where(denom_ok, denom, 1.0)
    cu = -ax / denom
    cv = -ay / denom
    valid = normals.valid & nz_ok & denom_ok
    return cu, cv, valid


def grad_estimate_normal(
    depth: DepthMap, normals: NormalMap, k: CameraIntrinsics
) -> GradientField:
    """Estimate 2: depth gradient from the normal map through the camera model.

    Grazing surfaces (|n_z| < 1e-6) and near-singular denominators are
    masked instead of producing unbounded values.
    """
    if depth.z.shape != normals.n.shape[:2]:
        raise ValueError("depth and normal maps must share their shape")
    cu, cv, ok = _normal_grad_coefficients(normals, k, depth.z.shape)
    valid = depth.valid & ok
    z = np.where(valid, depth.z, 0.0)
    return GradientField(cu * z, cv * z, valid)


def grad_estimate_tangent(normals: NormalMap) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """World-space tangent slopes (dZ/dX, dZ/dY) = (-n_x/n_z, -n_y/n_z).

    Returns:
        (dzdx, dzdy, valid); masked where |n_z| < 1e-6.  Depends on the
        normals only, never on depth.
    """
    n = normals.n
    ok = np.abs(n[..., 2]) >= _NZ_EPS
    nz = np.where(ok, n[..., 2], 1.0)
    dzdx = np.where(ok, -n[..., 0] / nz, 0.0)
    dzdy = np.where(ok, -n[..., 1] / nz, 0.0)
    return dzdx, dzdy, normals.valid & ok


def consistency_residuals(
    depth: DepthMap, normals: NormalMap, k: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (2, H, W) residual Estimate1 - Estimate2 and its (2, H, W) mask."""
    g1 = grad_estimate_sobel(depth)
    g2 = grad_estimate_normal(depth, normals, k)
    valid = g1.valid & g2.valid
    ru = np.where(valid, g1.dzdu - g2.dzdu, 0.0)
    rv = np.where(valid, g1.dzdv - g2.dzdv, 0.0)
    return np.stack([ru, rv]), np.stack([valid, valid])


def loss_consistency_lc(
    depth: DepthMap, normals: NormalMap, k: CameraIntrinsics, delta: float = 1.0
) -> float:
    """Pixel-space consistency loss: Huber of (Estimate 1 - Estimate 2).

    Both gradient components enter the mean, reduced over jointly valid
    pixels.

    Raises:
        ValueError: if no pixel is jointly valid.
    """
    res, valid = consistency_residuals(depth, normals, k)
    return huber_mean(res, valid, delta)


def tangent_residuals(
    depth: DepthMap, normals: NormalMap, k: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """World-space residuals for :func:`loss_consistency_lt`, flattened.

    Uses forward differences to the +u and +v neighbors.  The finite
    difference dZ/dX over a pixel pair is compared against the mean of the
    two endpoint tangent slopes, which keeps planes exact and curved
    surfaces second-order accurate.  Pairs whose world-coordinate step is
    below 1e-9 are skipped.
    """
    h, w = depth.z.shape
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    z = depth.z
    x = z * (u - k.uc) / k.fx
    y = z * (v - k.vc) / k.fy
    tx, ty, t_ok = grad_estimate_tangent(normals)
    ok = depth.valid & t_ok

    res = []
    # Horizontal pairs: (v, u) -> (v, u + 1), compared along X.
    pair_ok = ok[:, :-1] & ok[:, 1:]
    dx = x[:, 1:] - x[:, :-1]
    pair_ok &= np.abs(dx) >= 1e-9
    slope = np.where(pair_ok, (z[:, 1:] - z[:, :-1]) / np.where(pair_ok, dx, 1.0), 0.0)
    t_mid = 0.5 * (tx[:, :-1] + tx[:, 1:])
    res.append((slope - t_mid)[pair_ok])
    # Vertical pairs: (v, u) -> (v + 1, u), compared along Y.
    pair_ok = ok[:-1, :] & ok[1:, :]
    dy = y[1:, :] - y[:-1, :]
    pair_ok &= np.abs(dy) >= 1e-9
    slope = np.where(pair_ok, (z[1:, :] - z[:-1, :]) / np.where(pair_ok, dy, 1.0), 0.0)
    t_mid = 0.5 * (ty[:-1, :] + ty[1:, :])
    res.append((slope - t_mid)[pair_ok])
    flat = np.concatenate(res)
    return flat, np.ones(flat.shape, dtype=bool)


def loss_consistency_lt(
    depth: DepthMap, normals: NormalMap, k: CameraIntrinsics, delta: float = 1.0
) -> float:
    """World-space consistency baseline: Huber of finite-difference tangents.

    Invariant to global depth scaling: both the finite-difference slopes and
    the normal-derived tangents are unchanged when all depths are multiplied
    by a positive constant.
    """
    res, valid = tangent_residuals(depth, normals, k)
    return huber_mean(res, valid, delta)


def loss_total(
    d1: DepthMap,
    d2: DepthMap,
    d_gt: DepthMap,
    normals: NormalMap,
    normals_gt: NormalMap,
    weights: LossWeights = LossWeights(),
) -> LossBreakdown:
    """Composite supervision loss.

    L_z penalizes both depth estimates against ground truth (the second
    estimate weighted by lambda_z); L_n penalizes the normal residual
    componentwise; the total is L_z + lambda_n * L_n.

    Args:
        d1: Pre-aggregation depth estimate (e.g. per-pixel argmin depth).
        d2: Post-aggregation depth estimate (e.g. soft-argmin depth).
        d_gt: Ground-truth depth.
        normals: Estimated normal map.
        normals_gt: Ground-truth normal map.
        weights: Loss weights and Huber transition point.
    """
    dm = d1.valid & d2.valid & d_gt.valid
    nm = normals.valid & normals_gt.valid
    delta = weights.huber_delta
    l_z = huber_mean(d2.z - d_gt.z, dm, delta) + weights.lambda_z * huber_mean(
        d1.z - d_gt.z, dm, delta
    )
    n_res = normals.n - normals_gt.n
    l_n = huber_mean(n_res, np.repeat(nm[..., None], 3, axis=-1), delta)
    return LossBreakdown(l_z=l_z, l_n=l_n, total=l_z + weights.lambda_n * l_n)
