"""Canonical on-disk sequence format and training-sample assembly.

Layout per sequence directory:
    <seq>/frames/%06d.jpg       8-bit RGB frames at a fixed rate
    <seq>/poses.csv             header: frame_index,t,x,y,z,qw,qx,qy,qz
    <seq>/calib.json            {"intrinsics": {...}, "extrinsics": {...}}
    <seq>/meta.json             {"rate_hz": ..., "location": ..., "split": ...}
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from PIL import Image

from .calib import (CameraExtrinsics, CameraIntrinsics, CalibrationError,
                    VirtualCameraSpec, rotation_homography, stack_frames, warp_frame)
from .trajectory import (AnchorSet, EgoTrajectory, InsufficientHorizon, PoseLog,
                         ground_truth_trajectory)


class SequenceLoadError(ValueError):
    """Missing files, count mismatches, or malformed calibration."""


@dataclass(frozen=True)
class SequenceRecord:
    sequence_id: str
    path: Path
    frame_paths: Tuple[Path, ...]
    pose_log: PoseLog
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    rate_hz: float
    location: str
    split: str


@dataclass(frozen=True)
class TrainingSample:
    inputs: np.ndarray        # (6, 128, 256) float32 in [0, 1]
    ground_truth: EgoTrajectory
    sequence_id: str
    frame_index: int


def load_calibration(path: Path) -> Tuple[CameraIntrinsics, CameraExtrinsics]:
    try:
        doc = json.loads(Path(path).read_text())
        intr = doc["intrinsics"]
        extr = doc["extrinsics"]
        intrinsics = CameraIntrinsics(fx=intr["fx"], fy=intr["fy"], cx=intr["cx"],
                                      cy=intr["cy"], width=intr["width"], height=intr["height"])
        rotation = np.array(extr["rotation"], dtype=float).reshape(3, 3)
        extrinsics = CameraExtrinsics(rotation=rotation, height_above_ground=extr["height"])
    except (KeyError, ValueError, json.JSONDecodeError) as e:
        raise SequenceLoadError(f"malformed calibration {path}: {e}") from e
    return intrinsics, extrinsics


def load_pose_log(path: Path) -> PoseLog:
    times, positions, quats = [], [], []
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            for row in reader:
                times.append(float(row["t"]))
                positions.append([float(row["x"]), float(row["y"]), float(row["z"])])
                quats.append([float(row["qw"]), float(row["qx"]),
                              float(row["qy"]), float(row["qz"])])
        return PoseLog(timestamps=np.array(times), positions=np.array(positions),
                       orientations=np.array(quats))
    except (KeyError, TypeError, ValueError) as e:
        raise SequenceLoadError(f"malformed pose log {path}: {e}") from e


def load_sequence(directory: Path | str) -> SequenceRecord:
    directory = Path(directory)
    frames_dir = directory / "frames"
    for required in (frames_dir, directory / "poses.csv", directory / "calib.json",
                     directory / "meta.json"):
        if not required.exists():
            raise SequenceLoadError(f"missing {required}")

    frame_paths = tuple(sorted(frames_dir.glob("*.jpg")))
    if not frame_paths:
        raise SequenceLoadError(f"no frames in {frames_dir}")

    pose_log = load_pose_log(directory / "poses.csv")
    if len(pose_log) != len(frame_paths):
        raise SequenceLoadError(
            f"{directory}: {len(frame_paths)} frames but {len(pose_log)} poses"
        )

    try:
        intrinsics, extrinsics = load_calibration(directory / "calib.json")
    except CalibrationError as e:
        raise SequenceLoadError(f"{directory}: {e}") from e

    meta = json.loads((directory / "meta.json").read_text())
    rate_hz = float(meta["rate_hz"])
    if rate_hz <= 0:
        raise SequenceLoadError(f"{directory}: rate_hz must be positive")

    return SequenceRecord(
        sequence_id=directory.name,
        path=directory,
        frame_paths=frame_paths,
        pose_log=pose_log,
        intrinsics=intrinsics,
        extrinsics=extrinsics,
        rate_hz=rate_hz,
        location=str(meta.get("location", "")),
        split=str(meta.get("split", "")),
    )


def warped_frames(seq: SequenceRecord, virtual: VirtualCameraSpec | None = None,
                  upto: int | None = None) -> List[np.ndarray]:
    """All frames warped into the virtual camera, as uint8 (128, 256, 3)."""
    virtual = virtual or VirtualCameraSpec()
    homography = rotation_homography(seq.intrinsics, seq.extrinsics, virtual)
    count = len(seq.frame_paths) if upto is None else min(upto, len(seq.frame_paths))
    out = []
    for path in seq.frame_paths[:count]:
        image = np.asarray(Image.open(path).convert("RGB"))
        out.append(warp_frame(image, homography))
    return out


def build_samples(seq: SequenceRecord, anchors: AnchorSet, stride: int = 1,
                  virtual: VirtualCameraSpec | None = None) -> Tuple[List[TrainingSample], int]:
    """One sample per stride-th frame starting at index 1; returns (samples, skipped).

    Frames without the full future horizon are skipped, not padded.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    candidates = list(range(1, len(seq.frame_paths), stride))

    usable: List[Tuple[int, EgoTrajectory]] = []
    skipped = 0
    for idx in candidates:
        try:
            usable.append((idx, ground_truth_trajectory(seq.pose_log, idx, anchors)))
        except InsufficientHorizon:
            skipped += 1

    if not usable:
        return [], skipped

    frames = warped_frames(seq, virtual, upto=max(i for i, _ in usable) + 1)
    samples = [
        TrainingSample(
            inputs=stack_frames(frames[idx], frames[idx - 1]),
            ground_truth=gt,
            sequence_id=seq.sequence_id,
            frame_index=idx,
        )
        for idx, gt in usable
    ]
    return samples, skipped


def split_dataset(seqs: Sequence, ratio: float, seed: int) -> Tuple[list, list]:
    """Deterministic train/val split at sequence granularity."""
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if len(seqs) < 2:
        raise ValueError("need at least 2 sequences to split")
    order = list(seqs)
    random.Random(seed).shuffle(order)
    n_train = int(round(len(order) * ratio))
    n_train = min(max(n_train, 1), len(order) - 1)
    return order[:n_train], order[n_train:]
