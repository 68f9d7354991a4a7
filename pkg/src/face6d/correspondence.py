"""Pixel-to-vertex correspondence construction.

A correspondence matrix is row-stochastic: row i is a probability
distribution over canonical mesh vertices for image pixel i.  Ground
truth rows come from the barycentric coordinates of the pixel inside
its (front-most) projected triangle, so they have at most 3 nonzeros.
Barycentric weights are computed in screen space; an optional
perspective-correct variant divides the weights by the vertex depths
and renormalizes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateTriangle,
    DimensionMismatch,
    EmptyMask,
    InvalidDimension,
    InvariantViolation,
    NotAProbabilityRow,
    ParseError,
    PixelOutsideFace,
)
from .geometry import (
    CameraIntrinsics,
    RigidPose,
    TriangleMesh,
    _as_points,
    _freeze,
    project_perspective,
)
from .uvmap import CONTAINMENT_TOL, SLIVER_AREA

ROW_SUM_TOL = 1e-6
_PIXEL_CHUNK = 256


@dataclass(frozen=True)
class PixelSet:
    """Ordered 2D pixel coordinates (x, y) in the full-image frame."""

    coords: np.ndarray

    def __post_init__(self):
        coords = _as_points(self.coords, 2, "pixel coords")
        if len(coords) < 4:
            raise InvariantViolation("need at least 4 pixels for downstream PnP")
        object.__setattr__(self, "coords", _freeze(coords))

    def __len__(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class CorrespondenceMatrix:
    """Sparse row-major m x n row-stochastic matrix (CSR-style storage)."""

    m: int
    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if indptr.shape != (self.m + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
            raise InvariantViolation("malformed row pointer array")
        if np.any(np.diff(indptr) < 0):
            raise InvariantViolation("row pointers must be non-decreasing")
        if len(weights) != len(indices):
            raise InvariantViolation("indices and weights must have equal length")
        if len(indices) and (indices.min() < 0 or indices.max() >= self.n):
            raise InvariantViolation("vertex index out of range")
        if np.any(weights < 0):
            raise InvariantViolation("weights must be non-negative")
        sums = np.zeros(self.m)
        np.add.at(sums, np.repeat(np.arange(self.m), np.diff(indptr)), weights)
        bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
        if bad.size:
            raise InvariantViolation(
                f"row {bad[0]} sums to {sums[bad[0]]!r}, expected 1 within {ROW_SUM_TOL}"
            )
        object.__setattr__(self, "indptr", _freeze(indptr))
        object.__setattr__(self, "indices", _freeze(indices))
        object.__setattr__(self, "weights", _freeze(weights))

    def row(self, i: int):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def max_row_entries(self) -> int:
        return int(np.max(np.diff(self.indptr))) if self.m else 0

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.m, self.n))
        rows = np.repeat(np.arange(self.m), np.diff(self.indptr))
        dense[rows, self.indices] = self.weights
        return dense

    @staticmethod
    def from_rows(rows, n: int) -> "CorrespondenceMatrix":
        """rows: iterable of (indices, weights) pairs."""
        indptr = [0]
        idx_parts = []
        w_parts = []
        for idx, w in rows:
            idx_parts.append(np.asarray(idx, dtype=np.int64))
            w_parts.append(np.asarray(w, dtype=np.float64))
            indptr.append(indptr[-1] + len(idx_parts[-1]))
        m = len(indptr) - 1
        indices = np.concatenate(idx_parts) if idx_parts else np.empty(0, np.int64)
        weights = np.concatenate(w_parts) if w_parts else np.empty(0)
        return CorrespondenceMatrix(m, n, np.asarray(indptr, np.int64), indices, weights)


def barycentric_coordinates(p, a, b, c):
    """Barycentric weights of p in triangle (a, b, c), summing to 1 exactly.

    w_a is computed as 1 - w_b - w_c.  Raises DegenerateTriangle when the
    signed area magnitude is at or below 1e-12 px^2.
    """
    p = np.asarray(p, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    e1 = b - a
    e2 = c - a
    denom = e1[0] * e2[1] - e1[1] * e2[0]
    if abs(denom) / 2.0 <= SLIVER_AREA:
        raise DegenerateTriangle(f"triangle area {denom / 2.0!r} px^2 is degenerate")
    dp = p - a
    wb = (dp[0] * e2[1] - dp[1] * e2[0]) / denom
    wc = (e1[0] * dp[1] - e1[1] * dp[0]) / denom
    wa = 1.0 - wb - wc
    return float(wa), float(wb), float(wc)


def build_gt_correspondence(
    mesh: TriangleMesh,
    pose: RigidPose,
    intr: CameraIntrinsics,
    pixels: PixelSet,
    perspective_correct: bool = False,
) -> CorrespondenceMatrix:
    """Ground-truth correspondence rows from projected-triangle containment.

    Each pixel is located in the front-most projected triangle containing
    it (by screen-interpolated depth); its barycentric weights, clamped to
    [0, 1] and renormalized, become the row over that triangle's vertex
    indices.  Raises PixelOutsideFace for the first uncovered pixel.
    """
    projected, depths = project_perspective(mesh.vertices, pose, intr)
    tris = mesh.triangles
    pa = projected[tris[:, 0]]
    e1 = projected[tris[:, 1]] - pa
    e2 = projected[tris[:, 2]] - pa
    denom = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    valid = np.abs(denom) / 2.0 > SLIVER_AREA
    if not valid.any():
        raise PixelOutsideFace(0)
    pa, e1, e2 = pa[valid], e1[valid], e2[valid]
    denom = denom[valid]
    vtris = tris[valid]
    tri_depths = depths[vtris]  # (T, 3)

    coords = pixels.coords
    row_idx = np.empty((len(coords), 3), dtype=np.int64)
    row_w = np.empty((len(coords), 3))

    for lo in range(0, len(coords), _PIXEL_CHUNK):
        chunk = coords[lo : lo + _PIXEL_CHUNK]  # (P, 2)
        dp = chunk[:, None, :] - pa[None, :, :]  # (P, T, 2)
        wb = (dp[..., 0] * e2[:, 1] - dp[..., 1] * e2[:, 0]) / denom
        wc = (e1[:, 0] * dp[..., 1] - e1[:, 1] * dp[..., 0]) / denom
        wa = 1.0 - wb - wc
        inside = (
            (wa >= -CONTAINMENT_TOL)
            & (wb >= -CONTAINMENT_TOL)
            & (wc >= -CONTAINMENT_TOL)
        )
        covered = inside.any(axis=1)
        if not covered.all():
            raise PixelOutsideFace(int(lo + np.nonzero(~covered)[0][0]))
        z = (
            wa * tri_depths[:, 0]
            + wb * tri_depths[:, 1]
            + wc * tri_depths[:, 2]
        )
        z = np.where(inside, z, np.inf)
        front = np.argmin(z, axis=1)
        sel = np.arange(len(chunk))
        w3 = np.stack([wa[sel, front], wb[sel, front], wc[sel, front]], axis=1)
        w3 = np.clip(w3, 0.0, 1.0)
        if perspective_correct:
            w3 = w3 / tri_depths[front]
        w3 /= w3.sum(axis=1, keepdims=True)
        row_idx[lo : lo + len(chunk)] = vtris[front]
        row_w[lo : lo + len(chunk)] = w3

    keep = row_w > 0.0
    counts = keep.sum(axis=1)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return CorrespondenceMatrix(
        len(coords), mesh.n_vertices, indptr, row_idx[keep], row_w[keep]
    )


def corresponding_points(matrix: CorrespondenceMatrix, mesh: TriangleMesh) -> np.ndarray:
    """Row-wise convex combinations of canonical vertices, shape (m, 3)."""
    if matrix.n != mesh.n_vertices:
        raise DimensionMismatch(
            f"matrix has n={matrix.n} but mesh has {mesh.n_vertices} vertices"
        )
    out = np.zeros((matrix.m, 3))
    rows = np.repeat(np.arange(matrix.m), np.diff(matrix.indptr))
    np.add.at(out, rows, matrix.weights[:, None] * mesh.vertices[matrix.indices])
    return out


def sample_pixels(mask: np.ndarray, m: int = 1024, seed=0) -> PixelSet:
    """Draw m pixels uniformly from the set pixels of a binary mask.

    Sampling is without replacement when enough pixels exist, with
    replacement (repetition) otherwise; deterministic per seed.
    """
    mask = np.asarray(mask)
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise EmptyMask("mask has no set pixel")
    rng = np.random.default_rng(seed)
    replace = len(xs) < m
    pick = rng.choice(len(xs), size=m, replace=replace)
    coords = np.stack([xs[pick], ys[pick]], axis=1).astype(np.float64)
    return PixelSet(coords)


def positional_encoding_2d(pixels: PixelSet, d: int) -> np.ndarray:
    """Sinusoidal 2D positional encoding, x in channels [0, d/2), y after.

    Within each half, pairs are (sin(p / 10000^(4i/d)), cos(p / 10000^(4i/d))).
    """
    if d <= 0 or d % 4 != 0:
        raise InvalidDimension(f"encoding dimension must be a positive multiple of 4, got {d}")
    coords = pixels.coords
    quarter = d // 4
    freqs = 10000.0 ** (4.0 * np.arange(quarter) / d)
    out = np.empty((len(coords), d))
    for axis in (0, 1):
        phase = coords[:, axis, None] / freqs[None, :]
        base = axis * (d // 2)
        out[:, base : base + d // 2 : 2] = np.sin(phase)
        out[:, base + 1 : base + d // 2 : 2] = np.cos(phase)
    return out


def rasterize_segmentation(
    mesh: TriangleMesh,
    pose: RigidPose,
    intr: CameraIntrinsics,
    height: int,
    width: int,
) -> np.ndarray:
    """Binary H x W mask of pixels whose centers fall in any projected triangle."""
    projected, _ = project_perspective(mesh.vertices, pose, intr)
    mask = np.zeros((height, width), dtype=np.uint8)
    for ia, ib, ic in mesh.triangles:
        pa, pb, pc = projected[ia], projected[ib], projected[ic]
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
        mask[y0 : y1 + 1, x0 : x1 + 1][inside] = 1
    return mask


def save_correspondence(matrix: CorrespondenceMatrix, path) -> None:
    """Text format: header `CORR m n`, then `row k idx:weight ...` lines."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write(f"CORR {matrix.m} {matrix.n}\n")
        for i in range(matrix.m):
            idx, w = matrix.row(i)
            pairs = " ".join(f"{j}:{v:.9g}" for j, v in zip(idx, w))
            fh.write(f"{i} {len(idx)} {pairs}\n" if len(idx) else f"{i} 0\n")
    os.replace(tmp, path)


def load_correspondence(path) -> CorrespondenceMatrix:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "CORR":
            raise ParseError("expected 'CORR m n' header", path, 1)
        try:
            m, n = int(header[1]), int(header[2])
        except ValueError:
            raise ParseError("non-integer matrix dimensions", path, 1) from None
        rows = []
        for line_no, raw in enumerate(fh, start=2):
            parts = raw.split()
            if not parts:
                continue
            try:
                row_i, k = int(parts[0]), int(parts[1])
            except (ValueError, IndexError):
                raise ParseError("malformed row prefix", path, line_no) from None
            if row_i != len(rows):
                raise ParseError(f"expected row {len(rows)}, got {row_i}", path, line_no)
            if len(parts) != 2 + k:
                raise ParseError(f"row {row_i} promises {k} entries", path, line_no)
            idx = np.empty(k, dtype=np.int64)
            w = np.empty(k)
            for j, pair in enumerate(parts[2:]):
                try:
                    left, right = pair.split(":")
                    idx[j], w[j] = int(left), float(right)
                except ValueError:
                    raise ParseError(f"malformed pair '{pair}'", path, line_no) from None
            rows.append((idx, w))
    if len(rows) != m:
        raise ParseError(f"header promises {m} rows, found {len(rows)}", path)
    return CorrespondenceMatrix.from_rows(rows, n)


def check_probability_rows(m_hat: np.ndarray) -> None:
    """Validate that every row of a dense matrix lies on the simplex."""
    m_hat = np.asarray(m_hat, dtype=np.float64)
    neg = np.nonzero((m_hat < 0).any(axis=1))[0]
    if neg.size:
        raise NotAProbabilityRow(int(neg[0]), ": negative entry")
    sums = m_hat.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
    if bad.size:
        raise NotAProbabilityRow(int(bad[0]), f": sums to {sums[bad[0]]!r}")
