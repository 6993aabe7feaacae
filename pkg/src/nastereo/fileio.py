"""Image and volume file formats.

PFM is the canonical float interchange format: header ``Pf`` (1 channel) or
``PF`` (3 channels), a dims line, then a scale line whose sign encodes
endianness (negative = little-endian), followed by rows stored bottom-up.

Masks ride along inside the data: invalid depth pixels are written as 0.0
and invalid normals as the zero vector, and readers reconstruct the mask
from those sentinels.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .maps import DepthMap, NormalMap

__all__ = [
    "read_pfm",
    "write_pfm",
    "write_depth_pfm",
    "read_depth_pfm",
    "write_normals_pfm",
    "read_normals_pfm",
    "write_pgm",
    "read_pgm",
    "write_depth_png16",
    "write_normals_png",
    "write_volume",
    "read_volume",
]


def write_pfm(path, data: np.ndarray, scale: float = 1.0) -> None:
    """Write a (H, W) or (H, W, 3) float array as PFM, little-endian."""
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 2:
        magic = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError(f"PFM supports (H, W) or (H, W, 3) arrays, got {a.shape}")
    h, w = a.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(f"{-abs(scale):.6f}\n".encode("ascii"))
        np.flipud(a).astype("<f4").tofile(f)


def _read_pfm_token(f) -> bytes:
    # Tokens may be separated by any whitespace, including a single trailing
    # newline after the scale; comments are not part of the format.
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise ValueError("unexpected end of PFM header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float32 array of shape (H, W) or (H, W, 3)."""
    with open(path, "rb") as f:
        magic = _read_pfm_token(f)
        if magic == b"Pf":
            channels = 1
        elif magic == b"PF":
            channels = 3
        else:
            raise ValueError(f"{path}: not a PFM file (bad magic {magic!r})")
        w = int(_read_pfm_token(f))
        h = int(_read_pfm_token(f))
        scale = float(_read_pfm_token(f))
        dtype = "<f4" if scale < 0 else ">f4"
        count = w * h * channels
        raw = np.fromfile(f, dtype=dtype, count=count)
        if raw.size != count:
            raise ValueError(f"{path}: truncated PFM payload")
    shape = (h, w) if channels == 1 else (h, w, 3)
    return np.flipud(raw.reshape(shape)).astype(np.float32)


def write_depth_pfm(path, depth: DepthMap) -> None:
    """Write a depth map as single-channel PFM with invalid pixels as 0."""
    z = np.where(depth.valid, depth.z, 0.0)
    write_pfm(path, z)


def read_depth_pfm(path) -> DepthMap:
    """Read a depth PFM; non-finite and non-positive pixels become invalid."""
    z = read_pfm(path).astype(np.float64)
    if z.ndim != 2:
        raise ValueError(f"{path}: expected single-channel depth PFM")
    valid = np.isfinite(z) & (z > 0)
    return DepthMap(np.where(valid, z, 1.0), valid)


def write_normals_pfm(path, normals: NormalMap) -> None:
    """Write a normal map as 3-channel PFM with invalid pixels as (0, 0, 0)."""
    n = np.where(normals.valid[..., None], normals.n, 0.0)
    write_pfm(path, n)


def read_normals_pfm(path) -> NormalMap:
    """Read a normal PFM; pixels are valid where the vector norm is near 1."""
    n = read_pfm(path).astype(np.float64)
    if n.ndim != 3:
        raise ValueError(f"{path}: expected 3-channel normal PFM")
    norms = np.linalg.norm(n, axis=-1)
    valid = np.isfinite(norms) & (np.abs(norms - 1.0) < 1e-3)
    unit = np.where(valid[..., None], n / np.where(norms > 0, norms, 1.0)[..., None], 0.0)
    # Re-seat the zero vector at invalid pixels so the container validates.
    unit[~valid] = 0.0
    return NormalMap(unit, valid)


def write_pgm(path, image: np.ndarray) -> None:
    """Write a grayscale image in [0, 1] as binary 8-bit PGM (P5)."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("PGM expects a 2D grayscale image")
    q = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    h, w = q.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        q.tofile(f)


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM into a float image in [0, 1]."""
    with open(path, "rb") as f:
        magic = _read_pfm_token(f)
        if magic != b"P5":
            raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
        w = int(_read_pfm_token(f))
        h = int(_read_pfm_token(f))
        maxval = int(_read_pfm_token(f))
        raw = np.fromfile(f, dtype=np.uint8, count=w * h)
        if raw.size != w * h:
            raise ValueError(f"{path}: truncated PGM payload")
    return raw.reshape(h, w).astype(np.float64) / maxval


def write_depth_png16(path, depth: DepthMap) -> None:
    """Export depth as 16-bit PNG in millimeters (invalid pixels = 0)."""
    from PIL import Image

    mm = np.where(depth.valid, np.clip(np.rint(depth.z * 1000.0), 1, 65535), 0)
    Image.fromarray(mm.astype(np.uint16)).save(path)


def write_normals_png(path, normals: NormalMap) -> None:
    """Export normals as 8-bit PNG with channel mapping (n + 1) / 2 * 255."""
    from PIL import Image

    rgb = np.clip(np.rint((normals.n + 1.0) / 2.0 * 255.0), 0, 255).astype(np.uint8)
    rgb[~normals.valid] = 0
    Image.fromarray(rgb, mode="RGB").save(path)


def write_volume(out_dir, slices: np.ndarray, planes: np.ndarray, kind: str) -> None:
    """Write a (H, W, D) volume as PFM slices plus a plane-depth manifest.

    The manifest lists one ``plane_XXX depth=... file=...`` line per slice so
    external tools can inspect individual slices.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = slices.shape[2]
    lines = [f"kind={kind}", f"num_planes={d}"]
    for i in range(d):
        name = f"slice_{i:03d}.pfm"
        write_pfm(out / name, slices[:, :, i])
        lines.append("plane_%03d depth=%.17g file=%s" % (i, planes[i], name))
    (out / "volume.txt").write_text("\n".join(lines) + "\n")


def read_volume(vol_dir) -> tuple[np.ndarray, np.ndarray, str]:
    """Read a slice-stack volume written by :func:`write_volume`.

    Returns:
        (volume, planes, kind) with volume of shape (H, W, D).
    """
    vol_dir = Path(vol_dir)
    manifest = vol_dir / "volume.txt"
    if not manifest.exists():
        raise ValueError(f"{vol_dir}: missing volume.txt manifest")
    kind = ""
    planes = []
    files = []
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("kind="):
            kind = line.split("=", 1)[1]
        elif line.startswith("plane_"):
            fields = dict(part.split("=", 1) for part in line.split()[1:])
            planes.append(float(fields["depth"]))
            files.append(fields["file"])
    slices = [read_pfm(vol_dir / name) for name in files]
    return np.stack(slices, axis=2).astype(np.float64), np.array(planes), kind
