"""Plane-sweep stereo with depth-normal consistency on analytic scenes.

Submodules:

- ``camera``: pinhole model, projection/unprojection, plane warping.
- ``sweep``: cost volumes, probability volumes, soft-argmin depth.
- ``normals``: normal extraction from depth maps and probability volumes.
- ``consistency``: both depth-gradient estimates and the consistency losses.
- ``refine``: consistency-driven depth refinement.
- ``scenegen``: analytic synthetic scenes with exact ground truth.
- ``evalkit``: depth/normal metrics and view-pair scoring.
- ``fileio``: PFM/PGM/PNG readers and writers.
- ``figures``: matplotlib report figures.
- ``cli``: the ``nastereo`` command-line tool.

Attribute access is lazy so the CLI can apply the ``NASTEREO_THREADS`` cap
before the numeric backends load.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "camera",
    "maps",
    "sweep",
    "normals",
    "consistency",
    "refine",
    "scenegen",
    "evalkit",
    "fileio",
    "figures",
    "config",
    "cli",
    "rng",
)


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
