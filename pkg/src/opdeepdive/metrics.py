"""Open-loop evaluation: range-bucketed imitation metrics and comfort metrics.

Imitation metrics bucket trajectory points by the ground-truth forward
distance ([0,10), [10,20), [20,30), [30,50), [50,inf) meters) and report
mean distance errors plus hit rates (AP) at fixed thresholds. Comfort
metrics differentiate a single trajectory over its anchor times to get
jerk and lateral-acceleration amplitudes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .trajectory import EgoTrajectory

BUCKET_EDGES = (10.0, 20.0, 30.0, 50.0)  # inner boundaries; outermost bucket is 50+
BUCKET_LABELS = ("0-10", "10-20", "20-30", "30-50", "50+")
AP_THRESHOLDS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class BucketMetrics:
    count: int
    mean_3d: Optional[float]
    mean_dx: Optional[float]
    mean_dy: Optional[float]
    ap: Tuple[Optional[float], ...]  # one per AP_THRESHOLDS entry; None when empty


@dataclass(frozen=True)
class ImitationReport:
    buckets: Tuple[BucketMetrics, ...]  # one per BUCKET_LABELS entry

    def to_dict(self) -> dict:
        rows = {}
        for label, b in zip(BUCKET_LABELS, self.buckets):
            rows[label] = {
                "count": b.count,
                "mean_distance_3d": b.mean_3d,
                "mean_abs_dx": b.mean_dx,
                "mean_abs_dy": b.mean_dy,
                **{f"ap@{tau:g}": v for tau, v in zip(AP_THRESHOLDS, b.ap)},
            }
        return rows


@dataclass(frozen=True)
class ComfortReport:
    avg_jerk: float      # m/s^3
    max_jerk: float
    avg_lat_acc: float   # m/s^2
    max_lat_acc: float

    def __post_init__(self):
        if not (self.max_jerk >= self.avg_jerk >= 0 and self.max_lat_acc >= self.avg_lat_acc >= 0):
            raise ValueError("comfort amplitudes must satisfy max >= average >= 0")

    def to_dict(self) -> dict:
        return {
            "avg_jerk": self.avg_jerk,
            "max_jerk": self.max_jerk,
            "avg_lat_acc": self.avg_lat_acc,
            "max_lat_acc": self.max_lat_acc,
        }


def bucket_index(x: float) -> int:
    """Bucket of a forward distance; boundary values belong to the upper bucket."""
    return int(np.searchsorted(BUCKET_EDGES, x, side="right"))


def pointwise_errors(pred: EgoTrajectory, gt: EgoTrajectory,
                     distance: str = "3d") -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-point (d, |dx|, |dy|, bucket) between corresponding points.

    `distance` selects the error used for d and the AP hit test: "3d" (default)
    or "xy" (bird's-eye view only).
    """
    if pred.anchors != gt.anchors:
        raise ValueError("prediction and ground truth use different anchor sets")
    if distance not in ("3d", "xy"):
        raise ValueError(f"unknown distance kind {distance!r}")
    delta = pred.points - gt.points
    dx = np.abs(delta[:, 0])
    dy = np.abs(delta[:, 1])
    if distance == "3d":
        d = np.linalg.norm(delta, axis=1)
    else:
        d = np.linalg.norm(delta[:, :2], axis=1)
    buckets = np.searchsorted(BUCKET_EDGES, gt.points[:, 0], side="right")
    return d, dx, dy, buckets


def imitation_metrics(pairs: Iterable[Tuple[EgoTrajectory, EgoTrajectory]],
                      distance: str = "3d") -> ImitationReport:
    """Aggregate bucketed distance errors and hit rates over (pred, gt) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one (prediction, ground truth) pair")

    n_buckets = len(BUCKET_LABELS)
    counts = np.zeros(n_buckets, dtype=int)
    sum_d = np.zeros(n_buckets)
    sum_dx = np.zeros(n_buckets)
    sum_dy = np.zeros(n_buckets)
    hits = np.zeros((n_buckets, len(AP_THRESHOLDS)), dtype=int)

    for pred, gt in pairs:
        d, dx, dy, buckets = pointwise_errors(pred, gt, distance)
        np.add.at(counts, buckets, 1)
        np.add.at(sum_d, buckets, d)
        np.add.at(sum_dx, buckets, dx)
        np.add.at(sum_dy, buckets, dy)
        for j, tau in enumerate(AP_THRESHOLDS):
            np.add.at(hits[:, j], buckets, (d < tau).astype(int))

    buckets_out = []
    for i in range(n_buckets):
        if counts[i] == 0:
            buckets_out.append(BucketMetrics(0, None, None, None, (None,) * len(AP_THRESHOLDS)))
        else:
            buckets_out.append(BucketMetrics(
                count=int(counts[i]),
                mean_3d=float(sum_d[i] / counts[i]),
                mean_dx=float(sum_dx[i] / counts[i]),
                mean_dy=float(sum_dy[i] / counts[i]),
                ap=tuple(float(hits[i, j] / counts[i]) for j in range(len(AP_THRESHOLDS))),
            ))
    return ImitationReport(buckets=tuple(buckets_out))


def _first_difference(values: np.ndarray, times: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Finite differences of (K, 3) samples at non-uniform times; values land at midpoints."""
    dt = np.diff(times)
    deriv = np.diff(values, axis=0) / dt[:, None]
    return deriv, 0.5 * (times[:-1] + times[1:])


def comfort_metrics(traj: EgoTrajectory) -> ComfortReport:
    """Jerk and lateral-acceleration amplitudes from successive finite differences."""
    if len(traj.anchors) < 4:
        raise ValueError("comfort metrics need at least 4 trajectory points")
    pts = traj.points
    times = traj.anchors.times

    vel, t_v = _first_difference(pts, times)
    acc, t_a = _first_difference(vel, t_v)
    jerk, _ = _first_difference(acc, t_a)

    jerk_amp = np.linalg.norm(jerk, axis=1)

    # Velocity interpolated to the acceleration evaluation times, xy-plane only.
    vel_at_a = np.column_stack([np.interp(t_a, t_v, vel[:, k]) for k in range(2)])
    acc_xy = acc[:, :2]
    speed = np.linalg.norm(vel_at_a, axis=1)
    lat_amp = np.zeros(len(t_a))
    moving = speed > 1e-9
    unit = vel_at_a[moving] / speed[moving, None]
    along = np.sum(acc_xy[moving] * unit, axis=1)
    lat_amp[moving] = np.linalg.norm(acc_xy[moving] - along[:, None] * unit, axis=1)

    return ComfortReport(
        avg_jerk=float(np.mean(jerk_amp)),
        max_jerk=float(np.max(jerk_amp)),
        avg_lat_acc=float(np.mean(lat_amp)),
        max_lat_acc=float(np.max(lat_amp)),
    )


def merge_comfort_reports(reports: Sequence[ComfortReport]) -> ComfortReport:
    """Dataset-level comfort summary: mean of averages, max of maxima."""
    if not reports:
        raise ValueError("no comfort reports to merge")
    return ComfortReport(
        avg_jerk=float(np.mean([r.avg_jerk for r in reports])),
        max_jerk=float(np.max([r.max_jerk for r in reports])),
        avg_lat_acc=float(np.mean([r.avg_lat_acc for r in reports])),
        max_lat_acc=float(np.max([r.max_lat_acc for r in reports])),
    )


def write_report_json(path, imitation: ImitationReport,
                      comfort: Optional[ComfortReport] = None) -> None:
    doc = {"imitation": imitation.to_dict()}
    if comfort is not None:
        doc["comfort"] = comfort.to_dict()
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


PER_POINT_CSV_HEADER = [
    "sequence_id", "frame_index", "anchor_time",
    "gt_x", "gt_y", "gt_z", "pred_x", "pred_y", "pred_z",
    "distance", "abs_dx", "abs_dy", "bucket",
]


def write_per_point_csv(path, rows: Iterable[Sequence]) -> None:
    """Per-sample per-point values, one row per (frame, anchor)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(PER_POINT_CSV_HEADER)
        writer.writerows(rows)
