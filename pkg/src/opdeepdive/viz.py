"""Bird's-eye-view trajectory plots and metric report figures."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import AP_THRESHOLDS, BUCKET_LABELS, ComfortReport, ImitationReport
from .model import MultimodalPrediction
from .trajectory import EgoTrajectory


def plot_bev_frame(pred: MultimodalPrediction, gt: Optional[EgoTrajectory],
                   out_path: Path | str, title: str = "") -> None:
    """One BEV figure: all predicted modes (opacity by confidence) plus ground truth.

    Forward (x) is up the page; leftward (y) is to the left.
    """
    fig, ax = plt.subplots(figsize=(5, 7))
    for m, traj in enumerate(pred.trajectories):
        conf = float(pred.confidences[m])
        ax.plot(traj.points[:, 1], traj.points[:, 0],
                marker=".", markersize=3, linewidth=1.5,
                alpha=0.15 + 0.85 * conf, label=f"pred{m} ({conf:.2f})")
    if gt is not None:
        ax.plot(gt.points[:, 1], gt.points[:, 0], color="black", linewidth=2,
                marker=".", markersize=3, label="gt")
    ax.set_xlabel("y leftward (m)")
    ax.set_ylabel("x forward (m)")
    ax.invert_xaxis()  # +y (leftward) renders to the left
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right", fontsize=7)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=100)
    plt.close(fig)


def plot_imitation_report(report: ImitationReport, out_path: Path | str) -> None:
    """Bucketed mean errors and AP values as grouped bars."""
    fig, (ax_err, ax_ap) = plt.subplots(1, 2, figsize=(10, 4))
    xs = np.arange(len(BUCKET_LABELS))

    def series(getter):
        return [getter(b) if getter(b) is not None else np.nan for b in report.buckets]

    width = 0.25
    ax_err.bar(xs - width, series(lambda b: b.mean_3d), width, label="mean 3D error")
    ax_err.bar(xs, series(lambda b: b.mean_dx), width, label="mean |dx|")
    ax_err.bar(xs + width, series(lambda b: b.mean_dy), width, label="mean |dy|")
    ax_err.set_xticks(xs, BUCKET_LABELS)
    ax_err.set_xlabel("forward range (m)")
    ax_err.set_ylabel("meters")
    ax_err.legend(fontsize=8)
    ax_err.set_title("Distance errors")

    for j, tau in enumerate(AP_THRESHOLDS):
        ax_ap.bar(xs + (j - 1) * width, series(lambda b, j=j: b.ap[j]), width,
                  label=f"AP@{tau:g}")
    ax_ap.set_xticks(xs, BUCKET_LABELS)
    ax_ap.set_xlabel("forward range (m)")
    ax_ap.set_ylim(0, 1.05)
    ax_ap.legend(fontsize=8)
    ax_ap.set_title("Average precision")

    fig.tight_layout()
    fig.savefig(out_path, dpi=100)
    plt.close(fig)


def plot_comfort_report(report: ComfortReport, out_path: Path | str) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    labels = ["avg jerk\n(m/s³)", "max jerk\n(m/s³)",
              "avg lat acc\n(m/s²)", "max lat acc\n(m/s²)"]
    values = [report.avg_jerk, report.max_jerk, report.avg_lat_acc, report.max_lat_acc]
    ax.bar(labels, values, color=["tab:blue", "tab:blue", "tab:orange", "tab:orange"])
    ax.set_title("Comfort metrics")
    fig.tight_layout()
    fig.savefig(out_path, dpi=100)
    plt.close(fig)
