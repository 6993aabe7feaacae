"""Flat key-value configuration and scene-spec files.

Both files use one ``key = value`` assignment per line with ``#`` comments
and no nesting.  Unknown or malformed keys raise :class:`ConfigError`
naming the offending key, which the CLI maps to exit code 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics, CameraPose
from .consistency import LossWeights
from .evalkit import ViewSelectionParams
from .refine import RefineConfig
from .scenegen import (
    CheckerTexture,
    ConstantTexture,
    NoiseTexture,
    PlaneSurface,
    SceneSpec,
    SphereSurface,
)
from .sweep import PlaneSweepConfig

__all__ = ["ConfigError", "parse_kv", "RunConfig", "scene_spec_from_file"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration input."""


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key: {key}")
        out[key] = value
    return out


def _take(kv: dict, key: str, conv, default):
    if key not in kv:
        return default
    raw = kv.pop(key)
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for key {key}: {raw!r}") from exc


def _require(kv: dict, key: str, conv):
    if key not in kv:
        raise ConfigError(f"missing key: {key}")
    return _take(kv, key, conv, None)


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


@dataclass
class RunConfig:
    """Aggregate configuration for the CLI commands."""

    sweep: PlaneSweepConfig = field(
        default_factory=lambda: PlaneSweepConfig(depth_min=1.0, depth_max=4.0)
    )
    weights: LossWeights = field(default_factory=LossWeights)
    refine: RefineConfig = field(default_factory=RefineConfig)
    view: ViewSelectionParams = field(default_factory=ViewSelectionParams)
    normal_window: int = 5
    seed: int = 0

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_kv(parse_kv(path.read_text()))

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "RunConfig":
        kv = dict(kv)
        try:
            sweep = PlaneSweepConfig(
                depth_min=_take(kv, "depth_min", float, 1.0),
                depth_max=_take(kv, "depth_max", float, 4.0),
                num_planes=_take(kv, "num_planes", int, 64),
                sampling=_take(kv, "sampling", str, "inverse"),
                cost_kind=_take(kv, "cost", str, "zncc"),
                patch_radius=_take(kv, "patch_radius", int, 2),
                softmax_temperature=_take(kv, "softmax_temperature", float, 0.05),
            )
            weights = LossWeights(
                lambda_z=_take(kv, "lambda_z", float, 0.7),
                lambda_n=_take(kv, "lambda_n", float, 3.0),
                lambda_c=_take(kv, "lambda_c", float, 1.0),
                huber_delta=_take(kv, "huber_delta", float, 1.0),
            )
            refine = RefineConfig(
                lambda_c=weights.lambda_c,
                max_iters=_take(kv, "max_iters", int, 300),
                step_size=_take(kv, "step_size", float, 1.0),
                convergence_tol=_take(kv, "convergence_tol", float, 1e-7),
                fix_normals=_take(kv, "fix_normals", _bool, True),
                loss_kind=_take(kv, "loss", str, "lc"),
                huber_delta_depth=weights.huber_delta,
                huber_delta_grad=_take(kv, "huber_delta_grad", float, 0.01),
                max_backtracks=_take(kv, "max_backtracks", int, 40),
            )
            view = ViewSelectionParams(
                theta0=_take(kv, "theta0", float, 5.0),
                sigma1=_take(kv, "sigma1", float, 1.0),
                sigma2=_take(kv, "sigma2", float, 10.0),
            )
            cfg = cls(
                sweep=sweep,
                weights=weights,
                refine=refine,
                view=view,
                normal_window=_take(kv, "normal_window", int, 5),
                seed=_take(kv, "seed", int, 0),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        if kv:
            raise ConfigError(f"unknown key: {sorted(kv)[0]}")
        return cfg


def _triple(raw: str) -> tuple[float, float, float]:
    parts = raw.split()
    if len(parts) != 3:
        raise ValueError(raw)
    return tuple(float(p) for p in parts)


def scene_spec_from_file(path, seed_override: int | None = None) -> SceneSpec:
    """Build a SceneSpec from a flat key-value file.

    Required keys: ``kind`` (plane | sphere) plus the surface parameters
    (``a_x``/``a_y``/``b`` or ``center``/``radius``).  Cameras form a rig of
    ``views`` cameras spaced ``baseline`` apart along +X, all sharing the
    ``fx fy uc vc`` intrinsics.  ``texture`` is checker, noise, or constant.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scene spec not found: {path}")
    kv = parse_kv(path.read_text())

    kind = _require(kv, "kind", str)
    if kind == "plane":
        surface = PlaneSurface(
            a_x=_take(kv, "a_x", float, 0.0),
            a_y=_take(kv, "a_y", float, 0.0),
            b=_require(kv, "b", float),
        )
    elif kind == "sphere":
        surface = SphereSurface(
            center=_require(kv, "center", _triple),
            radius=_require(kv, "radius", float),
        )
    else:
        raise ConfigError(f"invalid value for key kind: {kind!r} (expected plane or sphere)")

    tex_kind = _take(kv, "texture", str, "noise")
    seed = _take(kv, "seed", int, 0)
    if seed_override is not None:
        seed = seed_override
    if tex_kind == "checker":
        texture = CheckerTexture(period=_take(kv, "period", float, 0.1))
    elif tex_kind == "noise":
        texture = NoiseTexture(seed=seed, scale=_take(kv, "noise_scale", float, 0.1))
    elif tex_kind == "constant":
        texture = ConstantTexture(value=_take(kv, "value", float, 0.5))
    else:
        raise ConfigError(f"invalid value for key texture: {tex_kind!r}")

    width = _take(kv, "width", int, 128)
    height = _take(kv, "height", int, 128)
    k = CameraIntrinsics(
        fx=_take(kv, "fx", float, 100.0),
        fy=_take(kv, "fy", float, 100.0),
        uc=_take(kv, "uc", float, (width - 1) / 2.0),
        vc=_take(kv, "vc", float, (height - 1) / 2.0),
    )
    views = _take(kv, "views", int, 2)
    baseline = _take(kv, "baseline", float, 0.1)
    if views < 1:
        raise ConfigError("invalid value for key views: need at least 1")
    cameras = [
        (k, CameraPose.from_center(np.array([i * baseline, 0.0, 0.0]))) for i in range(views)
    ]
    if kv:
        raise ConfigError(f"unknown key: {sorted(kv)[0]}")
    try:
        return SceneSpec(surface=surface, texture=texture, image_size=(width, height), cameras=cameras)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
