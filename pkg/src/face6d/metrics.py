"""6DoF evaluation protocol: per-axis MAEs, MAE_r, MAE_t and ADD.

Angles are compared through the fixed euler decomposition with
wrap-aware absolute differences; translations are reported in mm.  ADD
is the mean distance between the model vertices transformed by the
ground-truth and by the predicted pose, also in mm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, EmptyMesh, InvariantViolation
from .geometry import RigidPose, TriangleMesh, rotation_to_euler

CSV_HEADER = "yaw,pitch,roll,mae_r,tx,ty,tz,mae_t,add_mm"

_AGG_TOL = 1e-9


@dataclass(frozen=True)
class PoseMetrics:
    """Aggregate pose errors; angles in degrees, distances in mm."""

    mae_yaw: float
    mae_pitch: float
    mae_roll: float
    mae_r: float
    mae_tx: float
    mae_ty: float
    mae_tz: float
    mae_t: float
    sample_count: int
    add_mm: float | None = None

    def __post_init__(self):
        values = [
            self.mae_yaw, self.mae_pitch, self.mae_roll, self.mae_r,
            self.mae_tx, self.mae_ty, self.mae_tz, self.mae_t,
        ]
        if self.add_mm is not None:
            values.append(self.add_mm)
        for v in values:
            if not (math.isfinite(v) and v >= 0):
                raise InvariantViolation("metrics must be finite and non-negative")
        if self.sample_count < 1:
            raise InvariantViolation("sample_count must be positive")
        r_mean = (self.mae_yaw + self.mae_pitch + self.mae_roll) / 3.0
        t_mean = (self.mae_tx + self.mae_ty + self.mae_tz) / 3.0
        if abs(self.mae_r - r_mean) > _AGG_TOL or abs(self.mae_t - t_mean) > _AGG_TOL:
            raise InvariantViolation("mae_r/mae_t must be the means of their components")

    @staticmethod
    def from_components(
        mae_yaw, mae_pitch, mae_roll, mae_tx, mae_ty, mae_tz, sample_count, add_mm=None
    ) -> "PoseMetrics":
        return PoseMetrics(
            mae_yaw=float(mae_yaw),
            mae_pitch=float(mae_pitch),
            mae_roll=float(mae_roll),
            mae_r=(float(mae_yaw) + float(mae_pitch) + float(mae_roll)) / 3.0,
            mae_tx=float(mae_tx),
            mae_ty=float(mae_ty),
            mae_tz=float(mae_tz),
            mae_t=(float(mae_tx) + float(mae_ty) + float(mae_tz)) / 3.0,
            sample_count=sample_count,
            add_mm=add_mm,
        )

    def csv_row(self) -> str:
        cells = [
            self.mae_yaw, self.mae_pitch, self.mae_roll, self.mae_r,
            self.mae_tx, self.mae_ty, self.mae_tz, self.mae_t,
        ]
        cells.append(self.add_mm if self.add_mm is not None else float("nan"))
        return ",".join(f"{c:.6g}" for c in cells)

    def to_json(self) -> str:
        fields = dict(zip(CSV_HEADER.split(","), [
            self.mae_yaw, self.mae_pitch, self.mae_roll, self.mae_r,
            self.mae_tx, self.mae_ty, self.mae_tz, self.mae_t, self.add_mm,
        ]))
        fields["sample_count"] = self.sample_count
        return json.dumps(fields, indent=2, sort_keys=True)


def _wrapped_abs_deg(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def pose_mae(gt: list, pred: list) -> PoseMetrics:
    """Component-wise MAEs over paired pose lists (ADD left unset)."""
    if len(gt) != len(pred):
        raise DimensionMismatch(f"{len(gt)} ground-truth poses vs {len(pred)} predictions")
    if not gt:
        raise EmptyInput("no poses to compare")
    ang = np.zeros((len(gt), 3))
    trans = np.zeros((len(gt), 3))
    for i, (g, p) in enumerate(zip(gt, pred)):
        eg = rotation_to_euler(g.rotation)
        ep = rotation_to_euler(p.rotation)
        ang[i] = [
            _wrapped_abs_deg(eg.yaw, ep.yaw),
            _wrapped_abs_deg(eg.pitch, ep.pitch),
            _wrapped_abs_deg(eg.roll, ep.roll),
        ]
        trans[i] = np.abs(g.translation - p.translation) * 1000.0
    a = ang.mean(axis=0)
    t = trans.mean(axis=0)
    return PoseMetrics.from_components(a[0], a[1], a[2], t[0], t[1], t[2], len(gt))


def add_metric(mesh: TriangleMesh, gt: RigidPose, pred: RigidPose) -> float:
    """Mean vertex distance between the two posed models, in mm."""
    if mesh.n_vertices == 0:
        raise EmptyMesh("mesh has no vertices")
    a = mesh.vertices @ gt.rotation.T + gt.translation
    b = mesh.vertices @ pred.rotation.T + pred.translation
    return float(np.mean(np.linalg.norm(a - b, axis=1)) * 1000.0)


@dataclass(frozen=True)
class SampleResult:
    """Per-sample record consumed by aggregate_report."""

    sample_id: str
    gt: RigidPose
    pred: RigidPose
    add_mm: float


def aggregate_report(samples: list) -> tuple:
    """Aggregate per-sample results into (PoseMetrics, csv_row string)."""
    if not samples:
        raise EmptyInput("no samples to aggregate")
    base = pose_mae([s.gt for s in samples], [s.pred for s in samples])
    add = float(np.mean([s.add_mm for s in samples]))
    metrics = PoseMetrics.from_components(
        base.mae_yaw, base.mae_pitch, base.mae_roll,
        base.mae_tx, base.mae_ty, base.mae_tz,
        len(samples), add_mm=add,
    )
    return metrics, metrics.csv_row()
