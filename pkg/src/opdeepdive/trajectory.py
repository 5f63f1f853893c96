"""Time-based anchors, pose logs, and ground-truth trajectory extraction.

Ego frame: x forward, y leftward, z upward, right-handed, attached to the
vehicle at the reference timestamp. Pose-log quaternions rotate global-frame
vectors into the body frame (wxyz order).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# The 33 future-time offsets (seconds) used by the comma-style ground truth.
# Quadratic spacing: dense near t=0, sparse toward the 10 s horizon.
COMMA_ANCHOR_TIMES = (
    0.0, 0.00976562, 0.0390625, 0.08789062, 0.15625,
    0.24414062, 0.3515625, 0.47851562, 0.625, 0.79101562,
    0.9765625, 1.18164062, 1.40625, 1.65039062, 1.9140625,
    2.19726562, 2.5, 2.82226562, 3.1640625, 3.52539062,
    3.90625, 4.30664062, 4.7265625, 5.16601562, 5.625,
    6.10351562, 6.6015625, 7.11914062, 7.65625, 8.21289062,
    8.7890625, 9.38476562, 10.0,
)


class InsufficientHorizon(ValueError):
    """Pose log does not cover the full anchor horizon after the reference frame."""


@dataclass(frozen=True)
class AnchorSet:
    """Ordered future-time offsets (seconds) at which trajectory points are defined."""

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 1:
            raise ValueError("anchor times must be a nonempty 1-D array")
        if not np.all(np.isfinite(times)):
            raise ValueError("anchor times must be finite")
        if times[0] < 0 or np.any(np.diff(times) <= 0):
            raise ValueError("anchor times must be non-negative and strictly increasing")
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return self.times.size

    def __eq__(self, other) -> bool:
        return isinstance(other, AnchorSet) and np.array_equal(self.times, other.times)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def comma_anchor_set() -> AnchorSet:
    """33 anchors over 10 s, including t=0, quadratically spaced."""
    return AnchorSet(np.array(COMMA_ANCHOR_TIMES))


def uniform_anchor_set(n: int, horizon: float) -> AnchorSet:
    """n strictly-future anchors evenly spaced up to `horizon` seconds (t=0 excluded)."""
    if n < 1:
        raise ValueError(f"need at least one anchor, got n={n}")
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    return AnchorSet(horizon * np.arange(1, n + 1) / n)


@dataclass(frozen=True)
class PoseLog:
    """Timestamped global poses of the ego vehicle for one recorded sequence."""

    timestamps: np.ndarray   # (K,) seconds, strictly increasing
    positions: np.ndarray    # (K, 3) meters, global frame
    orientations: np.ndarray  # (K, 4) unit quaternions wxyz, global -> body

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        p = np.asarray(self.positions, dtype=float)
        q = np.asarray(self.orientations, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("pose log needs at least 2 samples")
        if p.shape != (t.size, 3) or q.shape != (t.size, 4):
            raise ValueError(
                f"length mismatch: {t.size} timestamps, {p.shape} positions, {q.shape} orientations"
            )
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        norms = np.linalg.norm(q, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("orientation quaternions must be unit-norm")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "orientations", q)

    def __len__(self) -> int:
        return self.timestamps.size


@dataclass(frozen=True)
class EgoTrajectory:
    """N 3D points in the ego frame at the reference timestamp, one per anchor."""

    points: np.ndarray  # (N, 3)
    anchors: AnchorSet

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (len(self.anchors), 3):
            raise ValueError(
                f"expected {len(self.anchors)}x3 points, got shape {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValueError("trajectory points must be finite")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray     # (3, 3)
    translation: np.ndarray  # (3,)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a unit quaternion (w, x, y, z)."""
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def yaw_to_global_to_body_quaternion(yaw: float) -> np.ndarray:
    """Quaternion (wxyz) rotating global vectors into a body frame yawed by `yaw`."""
    return np.array([np.cos(-yaw / 2.0), 0.0, 0.0, np.sin(-yaw / 2.0)])


def global_to_ego(log: PoseLog, ref_index: int) -> RigidTransform:
    """Rigid transform from global coordinates into the ego frame at `ref_index`."""
    if not 0 <= ref_index < len(log):
        raise IndexError(f"ref_index {ref_index} out of range for log of length {len(log)}")
    rotation = quaternion_to_matrix(log.orientations[ref_index])
    translation = -rotation @ log.positions[ref_index]
    return RigidTransform(rotation=rotation, translation=translation)


def ground_truth_trajectory(log: PoseLog, ref_index: int, anchors: AnchorSet) -> EgoTrajectory:
    """Ego-frame positions at each anchor time, linearly interpolated from the log."""
    if not 0 <= ref_index < len(log):
        raise IndexError(f"ref_index {ref_index} out of range for log of length {len(log)}")
    t_ref = log.timestamps[ref_index]
    query = t_ref + anchors.times
    if query[-1] > log.timestamps[-1] + 1e-9:
        raise InsufficientHorizon(
            f"need poses up to t={query[-1]:.3f}, log ends at t={log.timestamps[-1]:.3f}"
        )
    global_pts = np.column_stack([
        np.interp(query, log.timestamps, log.positions[:, k]) for k in range(3)
    ])
    transform = global_to_ego(log, ref_index)
    return EgoTrajectory(points=transform.apply(global_pts), anchors=anchors)
