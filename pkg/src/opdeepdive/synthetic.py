"""Synthetic driving scenario generator.

Writes canonical sequence directories (frames/, poses.csv, calib.json,
meta.json) following exact parametric paths: straight, constant-radius arc,
or a smooth lane change. Frames are a flat ground plane with two lane lines
rendered through the camera model, textured with a world-anchored hash so
consecutive frames carry real optical flow. Everything is deterministic
given (spec, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np
from PIL import Image

from .calib import CameraExtrinsics, CameraIntrinsics, REFERENCE_MOUNT_ROTATION
from .trajectory import yaw_to_global_to_body_quaternion

LANE_HALF_WIDTH = 1.75  # lane width 3.5 m
LANE_LINE_HALF = 0.15
MAX_RENDER_DISTANCE = 120.0

PATH_TYPES = ("straight", "arc", "lane_change")


@dataclass(frozen=True)
class SyntheticSpec:
    path_type: str
    speed: float               # m/s
    duration: float            # s
    rate_hz: float
    seed: int
    radius: float | None = None           # arc only; signed, positive = left turn
    lateral_offset: float | None = None   # lane_change only, meters
    maneuver_duration: float | None = None  # lane_change only, seconds
    maneuver_start: float = 1.0
    anchor_horizon: float = 10.0
    min_radius: float = 10.0

    def __post_init__(self):
        if self.path_type not in PATH_TYPES:
            raise ValueError(f"unknown path type {self.path_type!r}")
        if self.speed <= 0 or self.rate_hz <= 0:
            raise ValueError("speed and rate_hz must be positive")
        if self.duration < self.anchor_horizon + 1.0:
            raise ValueError(
                f"duration {self.duration} s is shorter than anchor horizon + 1 s "
                f"({self.anchor_horizon + 1.0} s)"
            )
        if self.path_type == "arc":
            if self.radius is None or abs(self.radius) <= self.min_radius:
                raise ValueError(f"arc radius must exceed {self.min_radius} m in magnitude")
        if self.path_type == "lane_change":
            if self.lateral_offset is None or self.maneuver_duration is None:
                raise ValueError("lane_change needs lateral_offset and maneuver_duration")
            if self.maneuver_duration <= 0:
                raise ValueError("maneuver_duration must be positive")


def _smoothstep(u: np.ndarray) -> np.ndarray:
    # Quintic: C2-continuous, so acceleration (and comfort metrics) stay finite.
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)


def _smoothstep_deriv(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return 30.0 * u ** 2 * (1.0 - u) ** 2


def path_pose(spec: SyntheticSpec, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form (x, y, yaw) along the path at times t (no integration error)."""
    t = np.asarray(t, dtype=float)
    v = spec.speed
    if spec.path_type == "straight":
        return v * t, np.zeros_like(t), np.zeros_like(t)
    if spec.path_type == "arc":
        r = spec.radius
        theta = v * t / r
        return r * np.sin(theta), r * (1.0 - np.cos(theta)), theta
    # lane_change
    u = (t - spec.maneuver_start) / spec.maneuver_duration
    x = v * t
    y = spec.lateral_offset * _smoothstep(u)
    dy_dt = spec.lateral_offset * _smoothstep_deriv(u) / spec.maneuver_duration
    yaw = np.arctan2(dy_dt, v)
    return x, y, yaw


def lateral_offset_from_centerline(spec: SyntheticSpec, x: np.ndarray,
                                   y: np.ndarray) -> np.ndarray:
    """Signed lateral distance (positive left) from the path centerline, for rendering."""
    if spec.path_type == "straight":
        return y
    if spec.path_type == "arc":
        r = spec.radius
        return np.sign(r) * (abs(r) - np.hypot(x, y - r))
    u = (x / spec.speed - spec.maneuver_start) / spec.maneuver_duration
    return y - spec.lateral_offset * _smoothstep(u)


def default_source_camera() -> Tuple[CameraIntrinsics, CameraExtrinsics]:
    """A plausible physical mount: wider than the virtual camera, pitched 3 deg down."""
    intrinsics = CameraIntrinsics(fx=300.0, fy=300.0, cx=160.0, cy=80.0, width=320, height=160)
    pitch = math.radians(3.0)
    rot_x = np.array([
        [1.0, 0.0, 0.0],
        [0.0, math.cos(pitch), -math.sin(pitch)],
        [0.0, math.sin(pitch), math.cos(pitch)],
    ])
    extrinsics = CameraExtrinsics(rotation=rot_x @ REFERENCE_MOUNT_ROTATION,
                                  height_above_ground=1.2)
    return intrinsics, extrinsics


def _world_texture(x: np.ndarray, y: np.ndarray, seed: int) -> np.ndarray:
    """Pseudo-random ground brightness anchored to 0.5 m world cells."""
    ix = np.floor(x / 0.5)
    iy = np.floor(y / 0.5)
    h = np.sin(ix * 12.9898 + iy * 78.233 + seed * 0.12345) * 43758.5453
    return h - np.floor(h)


def render_frame(spec: SyntheticSpec, ego_xy: Tuple[float, float], yaw: float,
                 intrinsics: CameraIntrinsics, extrinsics: CameraExtrinsics) -> np.ndarray:
    """One RGB frame (H, W, 3 uint8) of the ground plane and lane lines."""
    h_img, w_img = intrinsics.height, intrinsics.width
    u, v = np.meshgrid(np.arange(w_img, dtype=float), np.arange(h_img, dtype=float))
    k_inv = np.linalg.inv(intrinsics.matrix)
    dirs_cam = k_inv @ np.stack([u.ravel(), v.ravel(), np.ones(u.size)])
    dirs_veh = extrinsics.rotation.T @ dirs_cam

    height = extrinsics.height_above_ground
    dz = dirs_veh[2]
    hits_ground = dz < -1e-9
    scale = np.zeros_like(dz)
    scale[hits_ground] = -height / dz[hits_ground]
    gx = dirs_veh[0] * scale
    gy = dirs_veh[1] * scale
    near = hits_ground & (gx > 0) & (gx < MAX_RENDER_DISTANCE)

    cos_y, sin_y = math.cos(yaw), math.sin(yaw)
    wx = ego_xy[0] + cos_y * gx - sin_y * gy
    wy = ego_xy[1] + sin_y * gx + cos_y * gy

    img = np.empty((h_img * w_img, 3), dtype=np.uint8)
    img[:] = (120, 150, 200)  # sky

    lat = lateral_offset_from_centerline(spec, wx[near], wy[near])
    tex = _world_texture(wx[near], wy[near], spec.seed)
    ground = np.empty((int(near.sum()), 3), dtype=np.uint8)
    base = (70.0 + 50.0 * tex).astype(np.uint8)
    ground[:, 0] = base
    ground[:, 1] = base
    ground[:, 2] = base
    on_line = (np.abs(np.abs(lat) - LANE_HALF_WIDTH) < LANE_LINE_HALF)
    ground[on_line] = (240, 240, 240)
    img[near] = ground
    return img.reshape(h_img, w_img, 3)


def write_poses_csv(path: Path, frame_indices, times, positions, quaternions) -> None:
    lines = ["frame_index,t,x,y,z,qw,qx,qy,qz"]
    for i, t, p, q in zip(frame_indices, times, positions, quaternions):
        lines.append(
            f"{i},{t:.9f},{p[0]:.9f},{p[1]:.9f},{p[2]:.9f},"
            f"{q[0]:.12f},{q[1]:.12f},{q[2]:.12f},{q[3]:.12f}"
        )
    path.write_text("\n".join(lines) + "\n")


def generate_synthetic(spec: SyntheticSpec, out: Path | str) -> Path:
    """Write one canonical sequence directory; returns its path."""
    out = Path(out)
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    n_frames = int(round(spec.duration * spec.rate_hz)) + 1
    times = np.arange(n_frames) / spec.rate_hz
    x, y, yaw = path_pose(spec, times)
    positions = np.column_stack([x, y, np.zeros_like(x)])
    quats = np.stack([yaw_to_global_to_body_quaternion(a) for a in yaw])

    write_poses_csv(out / "poses.csv", range(n_frames), times, positions, quats)

    intrinsics, extrinsics = default_source_camera()
    calib = {
        "intrinsics": {
            "fx": intrinsics.fx, "fy": intrinsics.fy,
            "cx": intrinsics.cx, "cy": intrinsics.cy,
            "width": intrinsics.width, "height": intrinsics.height,
        },
        "extrinsics": {
            "rotation": [float(r) for r in extrinsics.rotation.ravel()],
            "height": extrinsics.height_above_ground,
        },
    }
    (out / "calib.json").write_text(json.dumps(calib, indent=2) + "\n")
    (out / "meta.json").write_text(json.dumps(
        {"rate_hz": spec.rate_hz, "location": "synthetic", "split": ""}, indent=2) + "\n")

    for i in range(n_frames):
        frame = render_frame(spec, (x[i], y[i]), float(yaw[i]), intrinsics, extrinsics)
        Image.fromarray(frame).save(frames_dir / f"{i:06d}.jpg", quality=90)
    return out
