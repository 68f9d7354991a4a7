"""Core geometric types and projections.

Conventions used throughout the package:

* The camera looks down +z and depths are positive in front of it.
* Image origin is top-left, x grows right, y grows down, and integer
  pixel coordinates address pixel centers.
* 3D points are in meters, 2D points in pixels.  Sets of points are
  float64 arrays of shape (n, 3) or (n, 2).
* Euler convention: R = Rz(roll) @ Ry(yaw) @ Rx(pitch), yaw about the
  camera y-axis.  The middle (yaw) angle is constrained to [-90, 90] by
  the decomposition; gimbal lock is flagged when |yaw| > 89.99 deg, in
  which case pitch absorbs the free angle and roll is set to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfiguration,
    InvariantViolation,
    NonPositiveDepth,
)

MIN_DEPTH = 1e-9          # meters; below this a point counts as behind the camera
GIMBAL_LOCK_DEG = 89.99   # |yaw| beyond this flags the decomposition as locked


def _as_points(arr, dim, name):
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim == 1 and out.shape[0] == dim:
        out = out.reshape(1, dim)
    if out.ndim != 2 or out.shape[1] != dim:
        raise InvariantViolation(f"{name} must have shape (n, {dim}), got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InvariantViolation(f"{name} contains non-finite values")
    return out


def _freeze(arr):
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics (skew fixed at zero)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not math.isfinite(v):
                raise InvariantViolation(f"intrinsic {name} must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise InvariantViolation("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class RigidPose:
    """6DoF pose: rotation in SO(3) plus translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if R.shape != (3, 3):
            raise InvariantViolation(f"rotation must be 3x3, got {R.shape}")
        if t.shape != (3,):
            raise InvariantViolation(f"translation must have 3 components, got {t.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise InvariantViolation("pose contains non-finite values")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
            raise InvariantViolation("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise InvariantViolation("rotation determinant differs from 1 by more than 1e-9")
        object.__setattr__(self, "rotation", _freeze(R))
        object.__setattr__(self, "translation", _freeze(t))

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.eye(3), np.zeros(3))


def compose(outer: RigidPose, inner: RigidPose) -> RigidPose:
    """Pose composition: applying `inner` first, then `outer`."""
    return RigidPose(
        outer.rotation @ inner.rotation,
        outer.rotation @ inner.translation + outer.translation,
    )


def rotation_angle_deg(r1: np.ndarray, r2: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees."""
    c = (np.trace(np.asarray(r1).T @ np.asarray(r2)) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


@dataclass(frozen=True)
class OrthographicParams:
    """Scaled orthographic projection: pixel = s * (x, y) + t_2d."""

    scale: float
    translation_2d: np.ndarray

    def __post_init__(self):
        s = float(self.scale)
        t = np.asarray(self.translation_2d, dtype=np.float64).reshape(-1)
        if t.shape != (2,):
            raise InvariantViolation("translation_2d must have 2 components")
        if not (math.isfinite(s) and np.all(np.isfinite(t))):
            raise InvariantViolation("orthographic parameters must be finite")
        if s <= 0:
            raise InvariantViolation("orthographic scale must be positive")
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "translation_2d", _freeze(t))


@dataclass(frozen=True)
class TriangleMesh:
    """Canonical-space triangle mesh with per-vertex UV coordinates.

    vertices: (n, 3) meters; triangles: (k, 3) vertex indices;
    uv_coords: (n, 2) in the unit square [0, 1).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    uv_coords: np.ndarray

    def __post_init__(self):
        v = _as_points(self.vertices, 3, "vertices")
        uv = _as_points(self.uv_coords, 2, "uv_coords")
        tri = np.asarray(self.triangles)
        if tri.size == 0:
            tri = np.empty((0, 3), dtype=np.int64)
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise InvariantViolation(f"triangles must have shape (k, 3), got {tri.shape}")
        if not np.issubdtype(tri.dtype, np.integer):
            raise InvariantViolation("triangle indices must be integers")
        tri = tri.astype(np.int64)
        if len(uv) != len(v):
            raise InvariantViolation(
                f"uv_coords length {len(uv)} != vertex count {len(v)}"
            )
        if tri.size:
            if tri.min() < 0 or tri.max() >= len(v):
                raise InvariantViolation("triangle index out of range")
            if np.any(
                (tri[:, 0] == tri[:, 1])
                | (tri[:, 1] == tri[:, 2])
                | (tri[:, 0] == tri[:, 2])
            ):
                raise InvariantViolation("triangle with repeated vertex index")
            if len(np.unique(tri, axis=0)) != len(tri):
                raise InvariantViolation("duplicate triangle (same ordered index triple)")
        object.__setattr__(self, "vertices", _freeze(v))
        object.__setattr__(self, "triangles", _freeze(tri))
        object.__setattr__(self, "uv_coords", _freeze(uv))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)


def _wrap_deg(a: float) -> float:
    """Wrap an angle into (-180, 180]."""
    a = math.fmod(a, 360.0)
    if a <= -180.0:
        a += 360.0
    elif a > 180.0:
        a -= 360.0
    return a


@dataclass(frozen=True)
class EulerAngles:
    """Yaw/pitch/roll in degrees, each wrapped into (-180, 180].

    `gimbal_lock` is set by rotation_to_euler when the decomposition hit
    the |yaw| > 89.99 deg singularity; it is informational, not an error.
    """

    yaw: float
    pitch: float
    roll: float
    gimbal_lock: bool = False

    def __post_init__(self):
        for name in ("yaw", "pitch", "roll"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvariantViolation(f"{name} must be finite")
            object.__setattr__(self, name, _wrap_deg(v))


def project_perspective(points, pose: RigidPose, intr: CameraIntrinsics):
    """Pinhole projection of world points under a rigid pose.

    Returns (pixels, depths).  Raises NonPositiveDepth for the first point
    whose camera-frame depth is at or below 1e-9 m.
    """
    pts = _as_points(points, 3, "points")
    cam = pts @ pose.rotation.T + pose.translation
    z = cam[:, 2]
    bad = np.nonzero(z <= MIN_DEPTH)[0]
    if bad.size:
        raise NonPositiveDepth(int(bad[0]), float(z[bad[0]]))
    pixels = np.empty((len(pts), 2))
    pixels[:, 0] = intr.fx * cam[:, 0] / z + intr.cx
    pixels[:, 1] = intr.fy * cam[:, 1] / z + intr.cy
    return pixels, z.copy()


def project_orthographic(points, params: OrthographicParams) -> np.ndarray:
    """Scaled orthographic projection; z is discarded."""
    pts = _as_points(points, 3, "points")
    return params.scale * pts[:, :2] + params.translation_2d


def fit_orthographic(points, target_pixels) -> OrthographicParams:
    """Least-squares (s, t_2d) mapping (x, y) onto target pixels.

    Closed form: center both point sets, then s is the ratio of the
    cross- to self-correlation of the centered coordinates.
    """
    pts = _as_points(points, 3, "points")[:, :2]
    tgt = _as_points(target_pixels, 2, "target_pixels")
    if len(pts) != len(tgt):
        raise InvariantViolation("points and target_pixels must have equal length")
    if len(pts) < 2 or np.all(pts == pts[0]):
        raise DegenerateConfiguration("need >= 2 points with distinct (x, y)")
    pc = pts - pts.mean(axis=0)
    tc = tgt - tgt.mean(axis=0)
    denom = float(np.sum(pc * pc))
    if denom <= 0.0:
        raise DegenerateConfiguration("all (x, y) coordinates are equal")
    s = float(np.sum(pc * tc)) / denom
    if s <= 0:
        # a mirrored/degenerate target set; the model cannot represent it
        raise DegenerateConfiguration(f"best-fit scale {s:.3e} is not positive")
    t = tgt.mean(axis=0) - s * pts.mean(axis=0)
    return OrthographicParams(s, t)


def orthographic_residual(points, target_pixels, params: OrthographicParams) -> float:
    """Sum of squared pixel residuals of an orthographic fit."""
    proj = project_orthographic(points, params)
    tgt = _as_points(target_pixels, 2, "target_pixels")
    return float(np.sum((proj - tgt) ** 2))


def euler_to_rotation(e: EulerAngles) -> np.ndarray:
    """Compose R = Rz(roll) @ Ry(yaw) @ Rx(pitch)."""
    y, p, r = (math.radians(e.yaw), math.radians(e.pitch), math.radians(e.roll))
    cy, sy = math.cos(y), math.sin(y)
    cp, sp = math.cos(p), math.sin(p)
    cr, sr = math.cos(r), math.sin(r)
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    return rz @ ry @ rx


def rotation_to_euler(R) -> EulerAngles:
    """Decompose a rotation under the fixed Rz(roll) Ry(yaw) Rx(pitch) convention.

    The middle angle satisfies yaw = asin(-R[2,0]) in [-90, 90].  Within
    0.01 deg of |yaw| = 90 the outer angles are coupled; by convention
    pitch absorbs the free angle and roll is reported as 0, with the
    gimbal_lock flag set.
    """
    R = np.asarray(R, dtype=np.float64)
    RigidPose(R, np.zeros(3))  # reuse the SO(3) invariant checks
    sy = -R[2, 0]
    yaw = math.degrees(math.asin(min(1.0, max(-1.0, sy))))
    if abs(yaw) > GIMBAL_LOCK_DEG:
        sign = 1.0 if sy > 0 else -1.0
        pitch = math.degrees(math.atan2(sign * R[0, 1], sign * R[0, 2]))
        return EulerAngles(yaw, pitch, 0.0, gimbal_lock=True)
    pitch = math.degrees(math.atan2(R[2, 1], R[2, 2]))
    roll = math.degrees(math.atan2(R[1, 0], R[0, 0]))
    return EulerAngles(yaw, pitch, roll)
