"""Rendering canonical face geometry into a UV position map and back.

The map is an H x W x 3 raster whose covered pixels hold canonical-space
3D coordinates, with a binary validity weight per pixel.  UV origin is
top-left and v grows downward, matching the image convention; a UV
coordinate quantizes to pixel (floor(u*W), floor(v*H)), clamped to the
raster.  After triangles are rasterized, every vertex position is
splatted at its own quantized pixel, which makes extraction of the mesh
vertices from a rendered map exact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidPixel, InvariantViolation, UVOverlapWarning
from .geometry import TriangleMesh, _as_points, _freeze

CONTAINMENT_TOL = 1e-9    # barycentric weight slack for inside-or-on tests
SLIVER_AREA = 1e-12       # px^2; triangles at or below are skipped
OVERLAP_TOL = 1e-7        # conflicting-write threshold for the overlap warning


@dataclass(frozen=True)
class UVPositionMap:
    """H x W x 3 position raster plus H x W binary weight."""

    data: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        weight = np.asarray(self.weight, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise InvariantViolation(f"data must be (H, W, 3), got {data.shape}")
        if weight.shape != data.shape[:2]:
            raise InvariantViolation(
                f"weight shape {weight.shape} != raster shape {data.shape[:2]}"
            )
        if not np.all((weight == 0.0) | (weight == 1.0)):
            raise InvariantViolation("weight must be binary")
        on = weight == 1.0
        if not np.all(np.isfinite(data[on])):
            raise InvariantViolation("covered pixels must hold finite positions")
        if np.any(data[~on] != 0.0):
            raise InvariantViolation("uncovered pixels must be zero")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "weight", _freeze(weight))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def quantize_uv(uv_coords, height: int, width: int) -> np.ndarray:
    """Map UV coordinates to (col, row) pixel indices."""
    uv = _as_points(uv_coords, 2, "uv_coords")
    iu = np.minimum(np.floor(uv[:, 0] * width).astype(np.int64), width - 1)
    iv = np.minimum(np.floor(uv[:, 1] * height).astype(np.int64), height - 1)
    iu = np.maximum(iu, 0)
    iv = np.maximum(iv, 0)
    return np.stack([iu, iv], axis=1)


def _check_uv_range(uv):
    if np.any(uv < 0.0) or np.any(uv >= 1.0):
        raise InvariantViolation("uv coordinates must lie in [0, 1)^2")


def render_uv_position_map(mesh: TriangleMesh, height: int, width: int) -> UVPositionMap:
    """Rasterize mesh vertex positions into UV space (last write wins).

    Emits a UVOverlapWarning when two triangles disagree by more than
    1e-7 on a shared pixel, which signals a non-injective UV unwrap.
    """
    if height < 2 or width < 2:
        raise InvariantViolation("map dimensions must be at least 2x2")
    _check_uv_range(mesh.uv_coords)

    data = np.zeros((height, width, 3))
    weight = np.zeros((height, width))
    scaled = mesh.uv_coords * np.array([width, height], dtype=np.float64)
    verts = mesh.vertices
    overlaps = 0

    for ia, ib, ic in mesh.triangles:
        pa, pb, pc = scaled[ia], scaled[ib], scaled[ic]
        e1 = pb - pa
        e2 = pc - pa
        denom = e1[0] * e2[1] - e1[1] * e2[0]
        if abs(denom) / 2.0 <= SLIVER_AREA:
            continue
        x0 = max(0, int(np.ceil(min(pa[0], pb[0], pc[0]) - CONTAINMENT_TOL)))
        x1 = min(width - 1, int(np.floor(max(pa[0], pb[0], pc[0]) + CONTAINMENT_TOL)))
        y0 = max(0, int(np.ceil(min(pa[1], pb[1], pc[1]) - CONTAINMENT_TOL)))
        y1 = min(height - 1, int(np.floor(max(pa[1], pb[1], pc[1]) + CONTAINMENT_TOL)))
        if x1 < x0 or y1 < y0:
            continue
        xs = np.arange(x0, x1 + 1, dtype=np.float64)
        ys = np.arange(y0, y1 + 1, dtype=np.float64)
        dx = xs[None, :] - pa[0]
        dy = ys[:, None] - pa[1]
        wb = (dx * e2[1] - dy * e2[0]) / denom
        wc = (e1[0] * dy - e1[1] * dx) / denom
        wa = 1.0 - wb - wc
        inside = (wa >= -CONTAINMENT_TOL) & (wb >= -CONTAINMENT_TOL) & (wc >= -CONTAINMENT_TOL)
        if not inside.any():
            continue
        values = (
            wa[..., None] * verts[ia]
            + wb[..., None] * verts[ib]
            + wc[..., None] * verts[ic]
        )
        patch_w = weight[y0 : y1 + 1, x0 : x1 + 1]
        patch_d = data[y0 : y1 + 1, x0 : x1 + 1]
        conflict = inside & (patch_w == 1.0)
        if conflict.any():
            overlaps += int(
                np.count_nonzero(
                    np.max(np.abs(patch_d[conflict] - values[conflict]), axis=-1)
                    > OVERLAP_TOL
                )
            )
        patch_d[inside] = values[inside]
        patch_w[inside] = 1.0

    # vertex splats guarantee exact extraction at the quantized uv pixels
    px = quantize_uv(mesh.uv_coords, height, width)
    data[px[:, 1], px[:, 0]] = verts
    weight[px[:, 1], px[:, 0]] = 1.0

    if overlaps:
        warnings.warn(
            UVOverlapWarning(
                f"{overlaps} uv pixels received conflicting triangle writes"
            ),
            stacklevel=2,
        )
    return UVPositionMap(data, weight)


def extract_vertices(uv_map: UVPositionMap, uv_coords) -> np.ndarray:
    """Read 3D positions back at quantized UV pixels."""
    uv = _as_points(uv_coords, 2, "uv_coords")
    _check_uv_range(uv)
    px = quantize_uv(uv, uv_map.height, uv_map.width)
    w = uv_map.weight[px[:, 1], px[:, 0]]
    missing = np.nonzero(w == 0.0)[0]
    if missing.size:
        raise InvalidPixel(int(missing[0]))
    return uv_map.data[px[:, 1], px[:, 0]].copy()
