"""Training losses with analytic gradients.

Every loss returns (scalar, gradient-with-respect-to-the-prediction).
Gradients use the 0 subgradient for |.| at 0, and logs are floored at
eps = 1e-12 so sparse targets never produce infinities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .correspondence import CorrespondenceMatrix, check_probability_rows
from .errors import DimensionMismatch, InvariantViolation
from .uvmap import UVPositionMap

LOG_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Multi-task weights; defaults follow the training recipe."""

    uv: float = 0.5            # lambda_1, position-map L1
    corr_matrix: float = 0.01  # lambda_2, correspondence KL + entropy
    corr_points: float = 1.0   # lambda_3, corresponding-points L1
    seg: float = 0.01          # lambda_4, segmentation cross-entropy
    entropy: float = 0.1       # lambda inside the correspondence loss

    def __post_init__(self):
        for name in ("uv", "corr_matrix", "corr_points", "seg", "entropy"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not math.isfinite(v) or v < 0:
                raise InvariantViolation(f"loss weight {name} must be finite and >= 0")


def _raster(x):
    return x.data if isinstance(x, UVPositionMap) else np.asarray(x, dtype=np.float64)


def uv_weighted_l1(s: UVPositionMap, s_hat):
    """Weighted L1 over the position map: sum over valid pixels of |S - S_hat|.

    s_hat may be a UVPositionMap or a raw (H, W, 3) array.  The weight
    comes from the ground-truth map.  Gradient: sign(S_hat - S) * W.
    """
    gt = s.data
    pred = _raster(s_hat)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs target {gt.shape}")
    w = s.weight[:, :, None]
    diff = (pred - gt) * w
    loss = float(np.sum(np.abs(diff)))
    grad = np.sign(diff)
    return loss, grad


def corr_l1(x_corr, x_corr_hat):
    """Plain L1 over corresponding 3D points."""
    gt = np.asarray(x_corr, dtype=np.float64)
    pred = np.asarray(x_corr_hat, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs target {gt.shape}")
    diff = pred - gt
    return float(np.sum(np.abs(diff))), np.sign(diff)


def correspondence_loss(
    m_hat: np.ndarray,
    m: CorrespondenceMatrix,
    entropy_weight: float,
    pred_first: bool = False,
):
    """KL divergence between correspondence rows plus an entropy regularizer.

    loss = (1/m) * [ sum_i KL_i - entropy_weight * sum_ij p_ij log p_ij ]

    The default KL direction puts the ground truth first, KL(gt || pred),
    which stays finite for sparse targets.  pred_first=True selects the
    KL(pred || gt) direction instead (with the same eps flooring).
    """
    pred = np.asarray(m_hat, dtype=np.float64)
    if pred.shape != (m.m, m.n):
        raise DimensionMismatch(f"prediction {pred.shape} vs matrix ({m.m}, {m.n})")
    check_probability_rows(pred)
    gt = m.to_dense()
    log_pred = np.log(np.maximum(pred, LOG_EPS))
    live = pred > LOG_EPS

    if pred_first:
        log_gt = np.log(np.maximum(gt, LOG_EPS))
        kl = float(np.sum(pred * (log_pred - log_gt)))
        kl_grad = log_pred - log_gt + live.astype(np.float64)
    else:
        on = gt > 0
        log_gt = np.zeros_like(gt)
        log_gt[on] = np.log(gt[on])
        kl = float(np.sum(gt[on] * (log_gt[on] - log_pred[on])))
        kl_grad = np.where(live, -gt / np.maximum(pred, LOG_EPS), 0.0)

    ent = -float(np.sum(pred * log_pred))
    ent_grad = -np.where(live, log_pred + 1.0, math.log(LOG_EPS))

    loss = (kl + entropy_weight * ent) / m.m
    grad = (kl_grad + entropy_weight * ent_grad) / m.m
    return loss, grad


def seg_cross_entropy(logits, mask):
    """Mean 2-class softmax cross-entropy over all pixels.

    logits: (H, W, 2); mask: binary (H, W) of true classes.
    """
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask)
    if logits.ndim != 3 or logits.shape[2] != 2 or logits.shape[:2] != mask.shape:
        raise DimensionMismatch(f"logits {logits.shape} vs mask {mask.shape}")
    if not np.all(np.isfinite(logits)):
        raise InvariantViolation("logits must be finite")
    shifted = logits - logits.max(axis=2, keepdims=True)
    exps = np.exp(shifted)
    softmax = exps / exps.sum(axis=2, keepdims=True)
    n = mask.size
    cls = mask.astype(np.int64)
    picked = np.take_along_axis(softmax, cls[:, :, None], axis=2)[:, :, 0]
    loss = float(-np.sum(np.log(picked)) / n)
    onehot = np.zeros_like(softmax)
    np.put_along_axis(onehot, cls[:, :, None], 1.0, axis=2)
    grad = (softmax - onehot) / n
    return loss, grad


def total_loss(l_uv, l_matrix, l_points, l_seg, weights: LossWeights) -> float:
    """Weighted sum of the four task losses."""
    return (
        weights.uv * l_uv
        + weights.corr_matrix * l_matrix
        + weights.corr_points * l_points
        + weights.seg * l_seg
    )
