"""The planning network: backbone -> 1024 feature -> GRU(512) -> FC heads.

Raw head output layout per mode: [pt0.x, pt0.y, pt0.z, ..., ptN-1.z, conf_logit].
Coordinates are decoded with exp (x), sinh (y), identity (z); confidence with
sigmoid. The exp on x means the planner never predicts points behind the car.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import torch
import torch.nn as nn

from .trajectory import AnchorSet, EgoTrajectory

FEATURE_LEN = 1024
REDUCED_CHANNELS = 32
SPATIAL_SHAPE = (4, 8)
EFFICIENTNET_B2_CHANNELS = 1408


@dataclass(frozen=True)
class ModelConfig:
    num_modes: int = 5          # candidate trajectories per frame
    num_points: int = 33        # anchor points per trajectory
    gru_width: int = 512
    feature_len: int = FEATURE_LEN
    backbone_variant: str = "tiny"  # "full" mirrors EfficientNet-B2; "tiny" for desk-scale runs

    def __post_init__(self):
        if self.num_modes < 1 or self.num_points < 1:
            raise ValueError("num_modes and num_points must be >= 1")
        if self.feature_len != FEATURE_LEN:
            raise ValueError(f"feature length is fixed at {FEATURE_LEN}")
        if self.gru_width != 512:
            raise ValueError("GRU width is fixed at 512")
        if self.backbone_variant not in ("full", "tiny"):
            raise ValueError(f"unknown backbone variant {self.backbone_variant!r}")

    @property
    def raw_dim(self) -> int:
        return self.num_modes * (self.num_points * 3 + 1)

    def to_dict(self) -> dict:
        return {
            "num_modes": self.num_modes,
            "num_points": self.num_points,
            "gru_width": self.gru_width,
            "feature_len": self.feature_len,
            "backbone_variant": self.backbone_variant,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass(frozen=True)
class MultimodalPrediction:
    """M decoded candidate trajectories with confidences in [0, 1]."""

    trajectories: List[EgoTrajectory]
    confidences: np.ndarray  # (M,)

    def __post_init__(self):
        conf = np.asarray(self.confidences, dtype=float)
        if conf.ndim != 1 or conf.size != len(self.trajectories):
            raise ValueError("one confidence per trajectory required")
        if np.any(conf < 0) or np.any(conf > 1):
            raise ValueError("confidences must lie in [0, 1]")
        object.__setattr__(self, "confidences", conf)


def _tiny_backbone() -> nn.Module:
    # Five stride-2 stages: 128x256 -> 4x8. GroupNorm keeps small-batch training stable.
    chans = [6, 16, 32, 48, 64, 64]
    layers: list[nn.Module] = []
    for cin, cout in zip(chans[:-1], chans[1:]):
        layers += [
            nn.Conv2d(cin, cout, kernel_size=3, stride=2, padding=1, bias=False),
            nn.GroupNorm(num_groups=min(8, cout), num_channels=cout),
            nn.SiLU(inplace=True),
        ]
    return nn.Sequential(*layers)


def _full_backbone() -> nn.Module:
    from torchvision.models import efficientnet_b2

    features = efficientnet_b2(weights=None).features
    first = features[0][0]
    # Two stacked RGB frames: widen the stem to 6 input channels.
    features[0][0] = nn.Conv2d(
        6, first.out_channels, kernel_size=first.kernel_size,
        stride=first.stride, padding=first.padding, bias=False,
    )
    return features


_BACKBONE_OUT_CHANNELS = {"tiny": 64, "full": EFFICIENTNET_B2_CHANNELS}


class PlannerModel(nn.Module):
    """Two-frame input -> multimodal trajectory head, with recurrent state."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.backbone = _tiny_backbone() if config.backbone_variant == "tiny" else _full_backbone()
        self.reduce = nn.Conv2d(_BACKBONE_OUT_CHANNELS[config.backbone_variant],
                                REDUCED_CHANNELS, kernel_size=3, padding=1)
        self.gru = nn.GRUCell(config.feature_len, config.gru_width)
        self.head = nn.Sequential(
            nn.Linear(config.gru_width, config.gru_width),
            nn.ReLU(inplace=True),
            nn.Linear(config.gru_width, config.raw_dim),
        )

    def init_hidden(self, batch_size: int, device=None) -> torch.Tensor:
        return torch.zeros(batch_size, self.config.gru_width, device=device)

    def extract_features(self, frames: torch.Tensor) -> torch.Tensor:
        if frames.ndim != 4 or frames.shape[1:] != (6, 128, 256):
            raise ValueError(f"expected input of shape (B, 6, 128, 256), got {tuple(frames.shape)}")
        fmap = self.backbone(frames)
        if fmap.shape[-2:] != SPATIAL_SHAPE:
            raise RuntimeError(f"backbone spatial map is {tuple(fmap.shape[-2:])}, expected {SPATIAL_SHAPE}")
        return torch.flatten(self.reduce(fmap), start_dim=1)

    def forward(self, frames: torch.Tensor,
                hidden: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        features = self.extract_features(frames)
        if hidden.shape != (frames.shape[0], self.config.gru_width):
            raise ValueError(
                f"hidden state shape {tuple(hidden.shape)} does not match batch "
                f"({frames.shape[0]}, {self.config.gru_width})"
            )
        new_hidden = self.gru(features, hidden)
        return self.head(new_hidden), new_hidden


def build_model(config: ModelConfig) -> PlannerModel:
    return PlannerModel(config)


def split_raw(raw: torch.Tensor, config: ModelConfig) -> Tuple[torch.Tensor, torch.Tensor]:
    """Split raw head output into coordinates (..., M, N, 3) and confidence logits (..., M)."""
    if raw.shape[-1] != config.raw_dim:
        raise ValueError(f"raw output has length {raw.shape[-1]}, expected {config.raw_dim}")
    per_mode = raw.reshape(*raw.shape[:-1], config.num_modes, config.num_points * 3 + 1)
    coords = per_mode[..., : config.num_points * 3].reshape(
        *raw.shape[:-1], config.num_modes, config.num_points, 3
    )
    logits = per_mode[..., -1]
    return coords, logits


def decode_coords(raw_coords: torch.Tensor) -> torch.Tensor:
    """Map raw coordinates to metric space: x = exp, y = sinh, z = identity."""
    return torch.stack(
        [torch.exp(raw_coords[..., 0]), torch.sinh(raw_coords[..., 1]), raw_coords[..., 2]],
        dim=-1,
    )


def encode_coords(metric_coords: torch.Tensor) -> torch.Tensor:
    """Inverse of decode_coords: x = log, y = asinh, z = identity."""
    return torch.stack(
        [torch.log(metric_coords[..., 0]), torch.asinh(metric_coords[..., 1]),
         metric_coords[..., 2]],
        dim=-1,
    )


def decode_output(raw: np.ndarray | torch.Tensor, config: ModelConfig,
                  anchors: AnchorSet) -> MultimodalPrediction | List[MultimodalPrediction]:
    """Decode raw head output (D,) or (B, D) into multimodal predictions."""
    raw_t = torch.as_tensor(np.asarray(raw.detach() if isinstance(raw, torch.Tensor) else raw),
                            dtype=torch.float64)
    if not torch.isfinite(raw_t).all():
        raise ValueError("raw output contains non-finite values")
    if len(anchors) != config.num_points:
        raise ValueError(f"anchor set has {len(anchors)} points, model expects {config.num_points}")

    single = raw_t.ndim == 1
    if single:
        raw_t = raw_t.unsqueeze(0)
    coords, logits = split_raw(raw_t, config)
    decoded = decode_coords(coords).numpy()
    confidences = torch.sigmoid(logits).numpy()

    preds = [
        MultimodalPrediction(
            trajectories=[EgoTrajectory(points=decoded[b, m], anchors=anchors)
                          for m in range(config.num_modes)],
            confidences=confidences[b],
        )
        for b in range(raw_t.shape[0])
    ]
    return preds[0] if single else preds


def select_best(pred: MultimodalPrediction) -> EgoTrajectory:
    """The trajectory with the highest confidence; ties go to the lowest mode index."""
    return pred.trajectories[int(np.argmax(pred.confidences))]


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
