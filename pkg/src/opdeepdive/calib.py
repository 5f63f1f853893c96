"""Camera models and the perspective warp into the virtual camera view.

Conventions:
  Vehicle-road frame: x forward, y leftward, z upward (right-handed).
  Camera frame: x right, y down, z forward along the optical axis.
  Extrinsic rotations map vehicle-frame vectors into the camera frame.

The warp is rotation-only (plane at infinity): translation between the
physical and virtual camera is ignored, which is what removes mount bias
for distant scenery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VIRTUAL_WIDTH = 256
VIRTUAL_HEIGHT = 128

# Canonical forward-facing mount: cam_x = -veh_y, cam_y = -veh_z, cam_z = veh_x.
REFERENCE_MOUNT_ROTATION = np.array(
    [[0.0, -1.0, 0.0],
     [0.0, 0.0, -1.0],
     [1.0, 0.0, 0.0]]
)

ORTHONORMAL_TOL = 1e-9


class CalibrationError(ValueError):
    """Raised for invalid intrinsics/extrinsics or degenerate warps."""


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise CalibrationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise CalibrationError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx],
             [0.0, self.fy, self.cy],
             [0.0, 0.0, 1.0]]
        )


def _check_rotation(rotation: np.ndarray) -> np.ndarray:
    rotation = np.asarray(rotation, dtype=float)
    if rotation.shape != (3, 3):
        raise CalibrationError(f"rotation must be 3x3, got {rotation.shape}")
    if not np.allclose(rotation.T @ rotation, np.eye(3), atol=ORTHONORMAL_TOL):
        raise CalibrationError("rotation is not orthonormal")
    if np.linalg.det(rotation) < 0:
        raise CalibrationError("rotation has negative determinant (improper rotation)")
    return rotation


@dataclass(frozen=True)
class CameraExtrinsics:
    """Physical mount: rotation vehicle-road frame -> camera frame, plus camera height."""

    rotation: np.ndarray
    height_above_ground: float

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        if not self.height_above_ground > 0:
            raise CalibrationError(f"camera height must be positive, got {self.height_above_ground}")


def default_virtual_intrinsics() -> CameraIntrinsics:
    # Narrow forward field of view; the planner only looks at the road ahead.
    return CameraIntrinsics(fx=256.0, fy=256.0, cx=128.0, cy=64.0,
                            width=VIRTUAL_WIDTH, height=VIRTUAL_HEIGHT)


@dataclass(frozen=True)
class VirtualCameraSpec:
    """The canonical camera every raw frame is warped into."""

    intrinsics: CameraIntrinsics = field(default_factory=default_virtual_intrinsics)
    rotation: np.ndarray = field(default_factory=lambda: REFERENCE_MOUNT_ROTATION.copy())

    def __post_init__(self):
        if (self.intrinsics.width, self.intrinsics.height) != (VIRTUAL_WIDTH, VIRTUAL_HEIGHT):
            raise CalibrationError(
                f"virtual camera must be {VIRTUAL_WIDTH}x{VIRTUAL_HEIGHT}, "
                f"got {self.intrinsics.width}x{self.intrinsics.height}"
            )
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))


def rotation_homography(src: CameraIntrinsics, extr: CameraExtrinsics,
                        virt: VirtualCameraSpec) -> np.ndarray:
    """Homography mapping virtual-pixel homogeneous coords to source pixels.

    H = K_src @ R_rel @ K_virt^-1 with R_rel the rotation from the virtual
    camera frame to the source camera frame.
    """
    r_src = _check_rotation(extr.rotation)
    r_virt = _check_rotation(virt.rotation)
    r_rel = r_src @ r_virt.T
    h = src.matrix @ r_rel @ np.linalg.inv(virt.intrinsics.matrix)
    return h


def warp_frame(image: np.ndarray, homography: np.ndarray,
               out_height: int = VIRTUAL_HEIGHT, out_width: int = VIRTUAL_WIDTH) -> np.ndarray:
    """Inverse-map warp with bilinear sampling; out-of-bounds pixels are zero.

    `homography` maps output (virtual) pixel coords to source pixel coords.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.size == 0:
        raise ValueError(f"expected nonempty HxWx3 image, got shape {image.shape}")
    homography = np.asarray(homography, dtype=float)
    if homography.shape != (3, 3) or abs(np.linalg.det(homography)) < 1e-12:
        raise CalibrationError("homography must be an invertible 3x3 matrix")

    src_h, src_w = image.shape[:2]
    u, v = np.meshgrid(np.arange(out_width, dtype=float),
                       np.arange(out_height, dtype=float))
    ones = np.ones_like(u)
    mapped = homography @ np.stack([u.ravel(), v.ravel(), ones.ravel()])
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = mapped[0] / mapped[2]
        sy = mapped[1] / mapped[2]

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    wx = sx - x0
    wy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    out = np.zeros((out_height * out_width, 3), dtype=float)
    img = image.astype(float)

    def sample(xi, yi):
        valid = (xi >= 0) & (xi < src_w) & (yi >= 0) & (yi < src_h)
        vals = np.zeros((xi.size, 3), dtype=float)
        vals[valid] = img[yi[valid], xi[valid]]
        return vals

    finite = np.isfinite(sx) & np.isfinite(sy)
    wx = np.where(finite, wx, 0.0)
    wy = np.where(finite, wy, 0.0)
    x0 = np.where(finite, x0, -10)
    y0 = np.where(finite, y0, -10)

    out += sample(x0, y0) * ((1 - wx) * (1 - wy))[:, None]
    out += sample(x0 + 1, y0) * (wx * (1 - wy))[:, None]
    out += sample(x0, y0 + 1) * ((1 - wx) * wy)[:, None]
    out += sample(x0 + 1, y0 + 1) * (wx * wy)[:, None]

    out = out.reshape(out_height, out_width, 3)
    if image.dtype == np.uint8:
        out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out


def stack_frames(frame_t: np.ndarray, frame_t_prev: np.ndarray) -> np.ndarray:
    """Stack two warped frames into the (6, 128, 256) network input, scaled to [0, 1].

    Channel order is [previous RGB, current RGB].
    """
    expected = (VIRTUAL_HEIGHT, VIRTUAL_WIDTH, 3)
    for name, frame in (("frame_t", frame_t), ("frame_t_prev", frame_t_prev)):
        if np.asarray(frame).shape != expected:
            raise ValueError(f"{name} must have shape {expected}, got {np.asarray(frame).shape}")
    prev = np.asarray(frame_t_prev, dtype=np.float32).transpose(2, 0, 1) / 255.0
    cur = np.asarray(frame_t, dtype=np.float32).transpose(2, 0, 1) / 255.0
    return np.concatenate([prev, cur], axis=0)


def project_point(intrinsics: CameraIntrinsics, rotation: np.ndarray,
                  point_vehicle: np.ndarray) -> np.ndarray:
    """Pixel of a vehicle-frame 3D point through a rotation-only camera at the origin."""
    cam = np.asarray(rotation, dtype=float) @ np.asarray(point_vehicle, dtype=float)
    if cam[2] <= 0:
        raise ValueError("point is behind the camera")
    uv = intrinsics.matrix @ (cam / cam[2])
    return uv[:2]
