"""Per-pixel map containers: depth, normals, and depth gradients.

All maps pair a data array with a boolean validity mask of the same spatial
shape.  Invalid entries carry no meaning and every consumer in the package
is mask-aware.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["DepthMap", "NormalMap", "GradientField", "joint_valid"]


def _as_mask(valid, shape) -> np.ndarray:
    if valid is None:
        return np.ones(shape, dtype=bool)
    m = np.asarray(valid, dtype=bool)
    if m.shape != shape:
        raise ValueError(f"mask shape {m.shape} does not match data shape {shape}")
    return m


@dataclass
class DepthMap:
    """Per-pixel depth in meters with a validity mask.

    Depth must be strictly positive wherever valid.
    """

    z: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.z.ndim != 2:
            raise ValueError(f"depth must be 2D, got shape {self.z.shape}")
        self.valid = _as_mask(self.valid, self.z.shape)
        bad = self.valid & ~(self.z > 0)
        if np.any(bad):
            raise ValueError(f"{int(bad.sum())} valid pixels have non-positive depth")

    @property
    def height(self) -> int:
        return self.z.shape[0]

    @property
    def width(self) -> int:
        return self.z.shape[1]

    def copy(self) -> "DepthMap":
        return DepthMap(self.z.copy(), self.valid.copy())


@dataclass
class NormalMap:
    """Per-pixel unit normals (n_x, n_y, n_z) in the camera frame.

    Normals face the camera: n . ray < 0, hence n_z < 0 for fronto-parallel
    surfaces.  Unit length is enforced to 1e-6 wherever valid.
    """

    n: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.float64)
        if self.n.ndim != 3 or self.n.shape[2] != 3:
            raise ValueError(f"normals must have shape (H, W, 3), got {self.n.shape}")
        self.valid = _as_mask(self.valid, self.n.shape[:2])
        norms = np.linalg.norm(self.n[self.valid], axis=-1)
        if norms.size and np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("valid normals must be unit length within 1e-6")

    @property
    def height(self) -> int:
        return self.n.shape[0]

    @property
    def width(self) -> int:
        return self.n.shape[1]

    def copy(self) -> "NormalMap":
        return NormalMap(self.n.copy(), self.valid.copy())


@dataclass
class GradientField:
    """Per-pixel depth gradient (dZ/du, dZ/dv) in meters per pixel."""

    dzdu: np.ndarray
    dzdv: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        self.dzdu = np.asarray(self.dzdu, dtype=np.float64)
        self.dzdv = np.asarray(self.dzdv, dtype=np.float64)
        if self.dzdu.shape != self.dzdv.shape or self.dzdu.ndim != 2:
            raise ValueError("gradient components must be 2D arrays of equal shape")
        self.valid = _as_mask(self.valid, self.dzdu.shape)
        if not np.all(np.isfinite(self.dzdu[self.valid])) or not np.all(
            np.isfinite(self.dzdv[self.valid])
        ):
            raise ValueError("gradient must be finite wherever valid")


def joint_valid(*items) -> np.ndarray:
    """Logical AND of the validity masks of any mix of maps and bare masks."""
    masks = [it.valid if hasattr(it, "valid") else np.asarray(it, dtype=bool) for it in items]
    out = masks[0].copy()
    for m in masks[1:]:
        out &= m
    return out
