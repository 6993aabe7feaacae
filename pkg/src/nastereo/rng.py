"""Deterministic, platform-independent random streams.

Fixtures must be bit-reproducible across runs and platforms, so randomness
is generated from a splitmix64-style integer stream rather than a library
generator whose sequence may change between versions.  Gaussian samples come
from Box-Muller on top of that stream.
"""

from __future__ import annotations

import numpy as np

__all__ = ["uniforms", "gaussians", "hash_lattice"]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniforms(seed: int, count: int, stream: int = 0) -> np.ndarray:
    """`count` uniforms in (0, 1], element i depending only on (seed, stream, i)."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + np.uint64(stream) * _M1 + idx * _GAMMA
    bits = _mix(state)
    # 53-bit mantissa; +1 keeps the value strictly positive for log().
    return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def gaussians(seed: int, count: int, stream: int = 0) -> np.ndarray:
    """Standard normal samples via Box-Muller on the splitmix stream."""
    pairs = (count + 1) // 2
    u1 = uniforms(seed, pairs, stream=2 * stream)
    u2 = uniforms(seed, pairs, stream=2 * stream + 1)
    r = np.sqrt(-2.0 * np.log(u1))
    z0 = r * np.cos(2.0 * np.pi * u2)
    z1 = r * np.sin(2.0 * np.pi * u2)
    return np.stack([z0, z1], axis=1).reshape(-1)[:count]


def hash_lattice(ix: np.ndarray, iy: np.ndarray, iz: np.ndarray, seed: int) -> np.ndarray:
    """Uniform [0, 1) value per integer lattice point, for procedural noise."""
    h = (
        np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        + ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        + iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
        + iz.astype(np.uint64) * np.uint64(0x165667B19E3779F9)
    )
    return (_mix(h) >> np.uint64(11)).astype(np.float64) * 2.0**-53
