"""Matplotlib figure rendering for evaluation reports.

Figures are written next to the delimited report output when the CLI is
invoked with ``--figures``.  All rendering uses the Agg backend so the
commands stay headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .maps import DepthMap, NormalMap
from .normals import angle_between

__all__ = [
    "save_depth_comparison",
    "save_normal_comparison",
    "save_trace_figure",
]


def _masked(values: np.ndarray, valid: np.ndarray) -> np.ma.MaskedArray:
    return np.ma.masked_array(values, mask=~valid)


def save_depth_comparison(path, pred: DepthMap, gt: DepthMap | None = None) -> None:
    """Predicted depth next to ground truth and the absolute error map."""
    ncols = 3 if gt is not None else 1
    fig, axes = plt.subplots(1, ncols, figsize=(4 * ncols, 3.4), squeeze=False)
    axes = axes[0]
    if gt is not None:
        both = np.concatenate([pred.z[pred.valid], gt.z[gt.valid]])
        vmin, vmax = float(both.min()), float(both.max())
    else:
        vmin = float(pred.z[pred.valid].min()) if pred.valid.any() else 0.0
        vmax = float(pred.z[pred.valid].max()) if pred.valid.any() else 1.0
    im = axes[0].imshow(_masked(pred.z, pred.valid), cmap="viridis", vmin=vmin, vmax=vmax)
    axes[0].set_title("predicted depth [m]")
    fig.colorbar(im, ax=axes[0], fraction=0.046)
    if gt is not None:
        im = axes[1].imshow(_masked(gt.z, gt.valid), cmap="viridis", vmin=vmin, vmax=vmax)
        axes[1].set_title("ground truth [m]")
        fig.colorbar(im, ax=axes[1], fraction=0.046)
        err = np.abs(pred.z - gt.z)
        joint = pred.valid & gt.valid
        im = axes[2].imshow(_masked(err, joint), cmap="magma")
        axes[2].set_title("|error| [m]")
        fig.colorbar(im, ax=axes[2], fraction=0.046)
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_normal_comparison(path, pred: NormalMap, gt: NormalMap | None = None) -> None:
    """Normal maps rendered as RGB = (n + 1) / 2, plus the angle error map."""
    ncols = 3 if gt is not None else 1
    fig, axes = plt.subplots(1, ncols, figsize=(4 * ncols, 3.4), squeeze=False)
    axes = axes[0]

    def rgb(nm: NormalMap) -> np.ndarray:
        img = (nm.n + 1.0) / 2.0
        img[~nm.valid] = 0.0
        return np.clip(img, 0.0, 1.0)

    axes[0].imshow(rgb(pred))
    axes[0].set_title("predicted normals")
    if gt is not None:
        axes[1].imshow(rgb(gt))
        axes[1].set_title("ground truth")
        joint = pred.valid & gt.valid
        angles = np.zeros(joint.shape)
        angles[joint] = angle_between(pred.n[joint], gt.n[joint])
        im = axes[2].imshow(_masked(angles, joint), cmap="magma")
        axes[2].set_title("angle error [deg]")
        fig.colorbar(im, ax=axes[2], fraction=0.046)
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_trace_figure(path, trace: np.ndarray) -> None:
    """Objective trace of a refinement run (log scale when positive)."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    it = trace[:, 0]
    ax.plot(it, trace[:, 1], label="objective", lw=1.6)
    ax.plot(it, trace[:, 2], label="data term", lw=1.0)
    ax.plot(it, trace[:, 3], label="consistency term", lw=1.0)
    if np.all(trace[:, 1:] >= 0) and np.any(trace[:, 1:] > 0):
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
