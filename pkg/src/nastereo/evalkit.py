"""Quantitative evaluation: depth errors, normal errors, view-pair scoring.

Depth metrics follow the standard multi-view stereo conventions: absolute
relative error, absolute difference, squared relative error, RMSE and its
log-scale variant, and inlier ratios at thresholds 1.25^i.  Normal quality
is summarized by the per-pixel angle error (mean and median) and the
fraction of pixels under 11.25, 22.5, and 30 degrees.  All reductions are
mask-aware; inlier thresholds are strict less-than.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .maps import DepthMap, NormalMap
from .normals import angle_between

__all__ = [
    "MetricsReport",
    "ViewSelectionParams",
    "depth_metrics",
    "normal_metrics",
    "merge_reports",
    "gaussian_weight",
    "view_pair_score",
    "report_lines",
    "report_csv",
]

DEPTH_FIELDS = ("abs_rel", "abs_diff", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")
NORMAL_FIELDS = ("mean_angle", "median_angle", "frac_11_25", "frac_22_5", "frac_30")


@dataclass
class MetricsReport:
    """Depth and normal error statistics for one evaluation run.

    Fields of a part that was not evaluated are None.
    """

    abs_rel: float | None = None
    abs_diff: float | None = None
    sq_rel: float | None = None
    rmse: float | None = None
    rmse_log: float | None = None
    delta1: float | None = None
    delta2: float | None = None
    delta3: float | None = None
    mean_angle: float | None = None
    median_angle: float | None = None
    frac_11_25: float | None = None
    frac_22_5: float | None = None
    frac_30: float | None = None
    pixel_count: int = 0


@dataclass(frozen=True)
class ViewSelectionParams:
    """Piecewise-Gaussian view scoring parameters (degrees)."""

    theta0: float = 5.0
    sigma1: float = 1.0
    sigma2: float = 10.0

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("sigma1 and sigma2 must be positive")


def depth_metrics(pred: DepthMap, gt: DepthMap) -> MetricsReport:
    """Depth error statistics over the jointly valid pixels.

    Pixels with non-positive predictions are excluded from rmse_log (they
    still count everywhere else); their inlier ratio contribution is zero.

    Raises:
        ValueError: if no pixel is jointly valid.
    """
    mask = pred.valid & gt.valid
    if not mask.any():
        raise ValueError("no jointly valid pixels between prediction and ground truth")
    p = pred.z[mask]
    g = gt.z[mask]
    diff = np.abs(p - g)
    pos = p > 0
    if pos.any():
        log_err = np.log(p[pos]) - np.log(g[pos])
        rmse_log = float(np.sqrt(np.mean(log_err**2)))
    else:
        rmse_log = float("nan")
    p_safe = np.where(pos, p, 1.0)
    ratio = np.where(pos, np.maximum(p_safe / g, g / p_safe), np.inf)
    return MetricsReport(
        abs_rel=float(np.mean(diff / g)),
        abs_diff=float(np.mean(diff)),
        sq_rel=float(np.mean(diff**2 / g)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=rmse_log,
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        pixel_count=int(mask.sum()),
    )


def normal_metrics(pred: NormalMap, gt: NormalMap) -> MetricsReport:
    """Angle error statistics over the jointly valid pixels.

    The median over an even pixel count is the mean of the two central
    order statistics; threshold fractions use strict less-than.
    """
    mask = pred.valid & gt.valid
    if not mask.any():
        raise ValueError("no jointly valid pixels between prediction and ground truth")
    angles = angle_between(pred.n[mask], gt.n[mask])
    return MetricsReport(
        mean_angle=float(np.mean(angles)),
        median_angle=float(np.median(angles)),
        frac_11_25=float(np.mean(angles < 11.25)),
        frac_22_5=float(np.mean(angles < 22.5)),
        frac_30=float(np.mean(angles < 30.0)),
        pixel_count=int(mask.sum()),
    )


def merge_reports(depth: MetricsReport | None, normal: MetricsReport | None) -> MetricsReport:
    """Combine a depth-part and a normal-part report into one.

    pixel_count comes from the depth part when present.
    """
    out = MetricsReport()
    for rep, names in ((depth, DEPTH_FIELDS), (normal, NORMAL_FIELDS)):
        if rep is None:
            continue
        for name in names:
            setattr(out, name, getattr(rep, name))
        out.pixel_count = rep.pixel_count
    if depth is not None:
        out.pixel_count = depth.pixel_count
    return out


def gaussian_weight(theta: float, params: ViewSelectionParams = ViewSelectionParams()):
    """Piecewise Gaussian in the baseline angle, peaking at theta0 (degrees)."""
    theta = np.asarray(theta, dtype=np.float64)
    d2 = (theta - params.theta0) ** 2
    w = np.where(
        theta <= params.theta0,
        np.exp(-d2 / (2.0 * params.sigma1**2)),
        np.exp(-d2 / (2.0 * params.sigma2**2)),
    )
    return float(w) if w.ndim == 0 else w


def view_pair_score(
    points: np.ndarray,
    center_i: np.ndarray,
    center_j: np.ndarray,
    params: ViewSelectionParams = ViewSelectionParams(),
) -> float:
    """Sum of Gaussian weights of the baseline angles subtended by the points.

    The baseline angle at point p is the angle between the unit vectors
    (c_i - p) and (c_j - p).  Points coinciding with either camera center
    (vector shorter than 1e-12) are skipped.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    ci = np.asarray(center_i, dtype=np.float64).reshape(3)
    cj = np.asarray(center_j, dtype=np.float64).reshape(3)
    a = ci - p
    b = cj - p
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ok = (na > 1e-12) & (nb > 1e-12)
    if not ok.any():
        return 0.0
    cosang = np.clip(np.sum(a[ok] * b[ok], axis=1) / (na[ok] * nb[ok]), -1.0, 1.0)
    theta = np.degrees(np.arccos(cosang))
    return float(np.sum(gaussian_weight(theta, params)))


def report_lines(report: MetricsReport, prefix: str = "") -> list[str]:
    """Flat ``key = value`` lines, skipping parts that were not evaluated."""
    lines = []
    for f in fields(report):
        value = getattr(report, f.name)
        if value is None:
            continue
        if f.name == "pixel_count":
            lines.append(f"{prefix}{f.name} = {value}")
        else:
            lines.append(f"{prefix}{f.name} = {value:.12g}")
    return lines


def report_csv(report: MetricsReport, stem: str | None = None) -> tuple[str, str]:
    """Single-row CSV (header, row); absent parts drop their columns."""
    names = [f.name for f in fields(report) if getattr(report, f.name) is not None]
    header = ",".join((["stem"] if stem is not None else []) + names)
    vals = []
    for name in names:
        v = getattr(report, name)
        vals.append(str(v) if name == "pixel_count" else "%.12g" % v)
    row = ",".join(([stem] if stem is not None else []) + vals)
    return header, row
