"""Plane-sweep cost volumes and soft-argmin depth regression.

A family of fronto-parallel planes is hypothesized in the reference view.
For every pixel and plane, the reference patch is compared against the
source patch obtained by warping each patch pixel individually through the
plane and sampling bilinearly.  Costs over multiple source views are
averaged where valid.  The volume converts to a per-pixel probability
distribution over planes by a softmax of negated costs, from which depth is
regressed as the probability-weighted mean of plane depths.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .camera import relative_pose, warp_plane
from .maps import DepthMap

__all__ = [
    "PlaneSweepConfig",
    "CostVolume",
    "ProbabilityVolume",
    "plane_depths",
    "build_cost_volume",
    "to_probability",
    "soft_argmin_depth",
    "probability_from_depth",
]

_VAR_FLOOR = 1e-10  # intensity^2; patches below carry no matching signal


@dataclass(frozen=True)
class PlaneSweepConfig:
    """Sweep geometry, matching cost, and soft-argmin temperature."""

    depth_min: float
    depth_max: float
    num_planes: int = 64
    sampling: str = "inverse"  # "inverse" (uniform in 1/Z) or "uniform" (uniform in Z)
    cost_kind: str = "zncc"  # "zncc" or "sad"
    patch_radius: int = 2
    softmax_temperature: float = 0.05

    def __post_init__(self):
        if self.num_planes < 2:
            raise ValueError("num_planes must be at least 2")
        if not (0 < self.depth_min < self.depth_max):
            raise ValueError("need 0 < depth_min < depth_max")
        if self.sampling not in ("inverse", "uniform"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.cost_kind not in ("zncc", "sad"):
            raise ValueError(f"unknown cost_kind {self.cost_kind!r}")
        if self.patch_radius < 0:
            raise ValueError("patch_radius must be non-negative")
        if self.softmax_temperature <= 0:
            raise ValueError("softmax_temperature must be positive")


@dataclass
class CostVolume:
    """Per-pixel, per-plane matching cost (lower = better match)."""

    planes: np.ndarray  # (D,) strictly increasing depths in meters
    cost: np.ndarray  # (H, W, D)
    valid: np.ndarray  # (H, W, D)

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if np.any(np.diff(self.planes) <= 0):
            raise ValueError("plane depths must be strictly increasing")
        if self.cost.shape != self.valid.shape or self.cost.shape[2] != self.planes.size:
            raise ValueError("cost/valid/planes shapes disagree")
        if not np.all(np.isfinite(self.cost[self.valid])):
            raise ValueError("cost must be finite wherever valid")

    @property
    def height(self) -> int:
        return self.cost.shape[0]

    @property
    def width(self) -> int:
        return self.cost.shape[1]


@dataclass
class ProbabilityVolume:
    """Post-softmax correspondence distribution over planes, per pixel."""

    planes: np.ndarray  # (D,)
    prob: np.ndarray  # (H, W, D); zero at excluded planes
    valid: np.ndarray  # (H, W) pixel-level mask

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        sums = self.prob.sum(axis=2)
        if np.any(np.abs(sums[self.valid] - 1.0) > 1e-6):
            raise ValueError("probabilities must sum to 1 within 1e-6 on valid pixels")
        if np.any(self.prob < 0):
            raise ValueError("probabilities must be non-negative")

    @property
    def height(self) -> int:
        return self.prob.shape[0]

    @property
    def width(self) -> int:
        return self.prob.shape[1]


def plane_depths(cfg: PlaneSweepConfig) -> np.ndarray:
    """Sweep plane depths, increasing.

    Inverse-depth mode spaces planes uniformly in 1/Z (constant disparity
    steps under pure translation); uniform mode spaces them uniformly in Z.
    """
    if cfg.sampling == "inverse":
        inv = np.linspace(1.0 / cfg.depth_min, 1.0 / cfg.depth_max, cfg.num_planes)
        return 1.0 / inv
    return np.linspace(cfg.depth_min, cfg.depth_max, cfg.num_planes)


def _to_gray(image: np.ndarray) -> np.ndarray:
    a = np.asarray(image, dtype=np.float64)
    if a.ndim == 3:
        a = a.mean(axis=2)
    if a.ndim != 2:
        raise ValueError(f"images must be (H, W) or (H, W, 3), got {a.shape}")
    return a


def _bilinear(image: np.ndarray, coords: np.ndarray, valid_in: np.ndarray):
    """Sample image at continuous (u, v) coords; out-of-bounds become invalid."""
    h, w = image.shape
    u = coords[..., 0]
    v = coords[..., 1]
    inside = valid_in & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    u = np.where(inside, u, 0.0)
    v = np.where(inside, v, 0.0)
    u0 = np.minimum(np.floor(u).astype(np.int64), w - 2)
    v0 = np.minimum(np.floor(v).astype(np.int64), h - 2)
    fu = u - u0
    fv = v - v0
    val = (
        image[v0, u0] * (1 - fu) * (1 - fv)
        + image[v0, u0 + 1] * fu * (1 - fv)
        + image[v0 + 1, u0] * (1 - fu) * fv
        + image[v0 + 1, u0 + 1] * fu * fv
    )
    return np.where(inside, val, 0.0), inside


def _box_sum(x: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window via an integral image, zero outside."""
    if radius == 0:
        return x.astype(np.float64)
    h, w = x.shape
    size = 2 * radius + 1
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


def _patch_cost(ref, warped, warped_valid, kind: str, radius: int):
    """Photometric patch cost between the reference grid and a warped source."""
    area = (2 * radius + 1) ** 2
    count = _box_sum(warped_valid.astype(np.float64), radius)
    full = count > area - 0.5  # every patch sample valid
    # Patches must also fit inside the reference image.
    h, w = ref.shape
    interior = np.zeros((h, w), dtype=bool)
    if h > 2 * radius and w > 2 * radius:
        interior[radius : h - radius or None, radius : w - radius or None] = True
    full &= interior

    if kind == "sad":
        sad = _box_sum(np.abs(ref - warped) * warped_valid, radius) / area
        return np.where(full, sad, 0.0), full

    s_r = _box_sum(ref * warped_valid, radius)
    s_w = _box_sum(warped * warped_valid, radius)
    s_rr = _box_sum(ref * ref * warped_valid, radius)
    s_ww = _box_sum(warped * warped * warped_valid, radius)
    s_rw = _box_sum(ref * warped * warped_valid, radius)
    mean_r = s_r / area
    mean_w = s_w / area
    var_r = s_rr / area - mean_r * mean_r
    var_w = s_ww / area - mean_w * mean_w
    cov = s_rw / area - mean_r * mean_w
    textured = (var_r > _VAR_FLOOR) & (var_w > _VAR_FLOOR)
    ok = full & textured
    denom = np.sqrt(np.where(ok, var_r * var_w, 1.0))
    rho = np.clip(np.where(ok, cov, 0.0) / denom, -1.0, 1.0)
    return np.where(ok, 1.0 - rho, 0.0), ok


def build_cost_volume(ref_image, src_images, cameras, cfg: PlaneSweepConfig) -> CostVolume:
    """Build the plane-sweep cost volume for the reference view.

    Args:
        ref_image: Reference image, (H, W) or (H, W, 3), intensities [0, 1].
        src_images: One or more source images of the same size.
        cameras: (intrinsics, pose) pairs, reference first, then one per
            source image.  Poses are world -> camera.
        cfg: Sweep configuration.

    Returns:
        CostVolume.  Pixels with no valid source at a plane are masked at
        that plane; if no plane anywhere is valid the volume is returned
        fully masked with a warning rather than raising.
    """
    if len(src_images) < 1:
        raise ValueError("need at least one source view")
    if len(cameras) != 1 + len(src_images):
        raise ValueError("need one camera per image, reference first")
    ref = _to_gray(ref_image)
    srcs = [_to_gray(im) for im in src_images]
    for s in srcs:
        if s.shape != ref.shape:
            raise ValueError("all images must share the reference image size")
    h, w = ref.shape
    k_ref, pose_ref = cameras[0]
    rel = [relative_pose(pose_ref, pose_s) for _, pose_s in cameras[1:]]
    k_srcs = [k for k, _ in cameras[1:]]

    planes = plane_depths(cfg)
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    pixels = np.stack([u, v], axis=-1)

    cost = np.zeros((h, w, planes.size), dtype=np.float64)
    valid = np.zeros((h, w, planes.size), dtype=bool)
    for i, depth in enumerate(planes):
        acc = np.zeros((h, w), dtype=np.float64)
        n_ok = np.zeros((h, w), dtype=np.float64)
        for src, k_src, pose_rel in zip(srcs, k_srcs, rel):
            warped_px, in_front = warp_plane(pixels, depth, k_ref, k_src, pose_rel)
            sampled, ok = _bilinear(src, warped_px, in_front)
            c, c_ok = _patch_cost(ref, sampled, ok, cfg.cost_kind, cfg.patch_radius)
            acc += np.where(c_ok, c, 0.0)
            n_ok += c_ok
        any_ok = n_ok > 0
        cost[:, :, i] = np.where(any_ok, acc / np.maximum(n_ok, 1.0), 0.0)
        valid[:, :, i] = any_ok
    if not valid.any():
        warnings.warn("cost volume is fully masked: no view overlap at any plane")
    return CostVolume(planes, cost, valid)


def to_probability(cv: CostVolume, temperature: float) -> ProbabilityVolume:
    """Softmax over planes of (-cost / temperature), excluding invalid planes.

    Pixels with no valid plane are masked.  Shifting all costs at a pixel by
    a constant leaves its distribution unchanged.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logits = np.where(cv.valid, -cv.cost / temperature, -np.inf)
    peak = logits.max(axis=2, keepdims=True)
    pixel_valid = np.isfinite(peak[:, :, 0])
    shifted = np.where(cv.valid, logits - np.where(np.isfinite(peak), peak, 0.0), -np.inf)
    expv = np.exp(shifted, where=np.isfinite(shifted), out=np.zeros_like(cv.cost))
    total = expv.sum(axis=2, keepdims=True)
    prob = np.where(pixel_valid[..., None], expv / np.maximum(total, 1e-300), 0.0)
    return ProbabilityVolume(cv.planes.copy(), prob, pixel_valid)


def soft_argmin_depth(pv: ProbabilityVolume) -> DepthMap:
    """Probability-weighted mean of plane depths; masked pixels stay masked."""
    z = np.tensordot(pv.prob, pv.planes, axes=([2], [0]))
    return DepthMap(np.where(pv.valid, z, 1.0), pv.valid.copy())


def probability_from_depth(depth: DepthMap, planes: np.ndarray) -> ProbabilityVolume:
    """Distribution concentrated on the planes bracketing each depth.

    Mass is split linearly between the two neighboring planes so that the
    soft-argmin of the result reproduces the input depth exactly (depths
    outside the plane range clamp to the end planes).  This is the
    ground-truth volume used to probe volume-based normal extraction.
    """
    planes = np.asarray(planes, dtype=np.float64)
    d = planes.size
    h, w = depth.z.shape
    z = np.clip(depth.z, planes[0], planes[-1])
    idx = np.clip(np.searchsorted(planes, z, side="right") - 1, 0, d - 2)
    lo = planes[idx]
    hi = planes[idx + 1]
    alpha = np.clip((z - lo) / (hi - lo), 0.0, 1.0)
    prob = np.zeros((h, w, d), dtype=np.float64)
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    prob[rows, cols, idx] = 1.0 - alpha
    prob[rows, cols, idx + 1] += alpha
    prob[~depth.valid] = 0.0
    return ProbabilityVolume(planes.copy(), prob, depth.valid.copy())
