"""Figure rendering for the CLI report paths.

Figures are written next to the delimited output with the Agg backend;
given identical data the PNG bytes are reproducible.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import PoseMetrics  # noqa: E402


def _save(fig, path):
    tmp = f"{path}.tmp"
    fig.savefig(tmp, format="png", dpi=110)
    plt.close(fig)
    os.replace(tmp, path)


def render_evaluation_figure(metrics: PoseMetrics, per_sample_add, path) -> None:
    """Component MAE bars plus a histogram of per-sample ADD."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    labels = ["yaw", "pitch", "roll"]
    ax1.bar(labels, [metrics.mae_yaw, metrics.mae_pitch, metrics.mae_roll], color="#4878d0")
    ax1.axhline(metrics.mae_r, color="#d65f5f", linestyle="--", label=f"MAE_r = {metrics.mae_r:.3g}")
    ax1.set_ylabel("MAE (deg)")
    ax1.legend(fontsize=8)
    ax1.set_title("rotation")
    ax2.hist(per_sample_add, bins=min(30, max(5, len(per_sample_add) // 4)), color="#6acc64")
    ax2.set_xlabel("ADD (mm)")
    ax2.set_ylabel("samples")
    ax2.set_title(f"ADD, mean {metrics.add_mm:.3g} mm" if metrics.add_mm is not None else "ADD")
    fig.tight_layout()
    _save(fig, path)


def render_sweep_figure(param: str, values, mae_r, add_mm, path) -> None:
    """Aggregate error curves against the swept parameter."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(values, mae_r, marker="o", color="#4878d0")
    ax1.set_xlabel(param)
    ax1.set_ylabel("MAE_r (deg)")
    ax2.plot(values, add_mm, marker="o", color="#6acc64")
    ax2.set_xlabel(param)
    ax2.set_ylabel("ADD (mm)")
    for ax in (ax1, ax2):
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
