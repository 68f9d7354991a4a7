"""Portable float map I/O for UV position maps.

Header is `PF\\n<width> <height>\\n<scale>\\n` (negative scale =
little-endian), rows stored bottom-to-top, 3 interleaved 32-bit floats
per pixel.  The validity weight travels as a sidecar single-channel
`Pf` file of 0.0/1.0 next to the data file.

Data is stored as float32 on disk; write -> read is bit-exact for maps
whose values are float32-representable (in particular for anything a
previous read produced).
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DimensionMismatch, ParseError
from .uvmap import UVPositionMap


def mask_path_for(path) -> str:
    """Canonical sidecar path: foo.pfm -> foo.mask.pfm."""
    s = str(path)
    if s.endswith(".pfm"):
        return s[: -len(".pfm")] + ".mask.pfm"
    return s + ".mask.pfm"


def _read_header(fh, path):
    def read_line():
        raw = fh.readline()
        if not raw:
            raise ParseError("truncated header", path)
        return raw.decode("ascii", errors="replace").strip()

    tag = read_line()
    if tag not in ("PF", "Pf"):
        raise ParseError(f"bad magic '{tag}'", path)
    dims = read_line().split()
    if len(dims) != 2:
        raise ParseError("dimension line must hold width and height", path)
    try:
        width, height = int(dims[0]), int(dims[1])
    except ValueError:
        raise ParseError("non-integer dimensions", path) from None
    if width <= 0 or height <= 0:
        raise ParseError("dimensions must be positive", path)
    try:
        scale = float(read_line())
    except ValueError:
        raise ParseError("malformed scale line", path) from None
    if scale == 0:
        raise ParseError("scale must be non-zero", path)
    channels = 3 if tag == "PF" else 1
    return width, height, scale, channels


def _read_raster(path, expect_channels):
    with open(path, "rb") as fh:
        width, height, scale, channels = _read_header(fh, path)
        if channels != expect_channels:
            raise ParseError(
                f"expected {expect_channels}-channel file, got {channels}", path
            )
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        buf = fh.read(4 * count)
        if len(buf) != 4 * count:
            raise ParseError(
                f"truncated data: expected {4 * count} bytes, got {len(buf)}", path
            )
    data = np.frombuffer(buf, dtype=dtype).reshape(height, width, channels)
    return np.flipud(data).astype(np.float64)


def _write_raster(path, arr, tag):
    height, width = arr.shape[:2]
    flat = np.flipud(np.asarray(arr, dtype=np.float32)).tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(f"{tag}\n{width} {height}\n-1.0\n".encode("ascii"))
        fh.write(flat)
    os.replace(tmp, path)


def write_pfm(uv_map: UVPositionMap, path, mask_path=None) -> None:
    """Write a position map plus its weight sidecar."""
    _write_raster(path, uv_map.data, "PF")
    _write_raster(mask_path or mask_path_for(path), uv_map.weight, "Pf")


def read_pfm(path, mask_path=None) -> UVPositionMap:
    data = _read_raster(path, 3)
    weight = _read_raster(mask_path or mask_path_for(path), 1)[:, :, 0]
    if weight.shape != data.shape[:2]:
        raise DimensionMismatch(
            f"mask is {weight.shape}, data is {data.shape[:2]}"
        )
    return UVPositionMap(data, weight)


def write_scalar_pfm(arr, path) -> None:
    """Single-channel Pf file (used for segmentation masks)."""
    a = np.asarray(arr, dtype=np.float32)
    if a.ndim != 2:
        raise DimensionMismatch(f"scalar pfm needs a 2-d array, got {a.shape}")
    _write_raster(path, a, "Pf")


def read_scalar_pfm(path) -> np.ndarray:
    return _read_raster(path, 1)[:, :, 0]
