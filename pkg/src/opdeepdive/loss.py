"""Multimodal trajectory prediction loss.

The closest mode is picked by cosine similarity against the ground truth,
regressed with smooth-L1, and the confidences are trained with BCE against
a one-hot of the picked mode: L = L_reg + alpha * L_cls. Mode selection is
treated as a constant index per step (no gradient through the argmax).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .model import ModelConfig, decode_coords, split_raw


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0            # classification weight
    smooth_l1_beta: float = 1.0   # quadratic-to-linear transition point
    # "trajectory": cosine over full flattened 3N vectors (default).
    # "endpoint": cosine between final xy displacement directions, as in the
    # original MTP formulation; kept for comparison.
    mode_selection: str = "trajectory"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.smooth_l1_beta <= 0:
            raise ValueError(f"smooth_l1_beta must be > 0, got {self.smooth_l1_beta}")
        if self.mode_selection not in ("trajectory", "endpoint"):
            raise ValueError(f"unknown mode_selection {self.mode_selection!r}")


@dataclass
class LossBreakdown:
    total: torch.Tensor
    regression: torch.Tensor
    classification: torch.Tensor
    selected_mode: int


def _cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    # Degenerate (zero-norm) vectors score -1 so they are never preferred.
    na = torch.linalg.vector_norm(a, dim=-1)
    nb = torch.linalg.vector_norm(b, dim=-1)
    sim = (a * b).sum(dim=-1) / (na * nb).clamp_min(1e-30)
    return torch.where((na > 0) & (nb > 0), sim, torch.full_like(sim, -1.0))


def select_mode(pred_trajs: torch.Tensor, gt: torch.Tensor,
                mode_selection: str = "trajectory") -> int:
    """Index of the decoded mode most similar to the ground truth (M, N, 3 vs N, 3)."""
    pred_trajs = torch.as_tensor(pred_trajs, dtype=torch.float64)
    gt = torch.as_tensor(gt, dtype=torch.float64)
    if mode_selection == "endpoint":
        sims = _cosine(pred_trajs[:, -1, :2], gt[-1, :2].expand(pred_trajs.shape[0], 2))
    else:
        sims = _cosine(pred_trajs.reshape(pred_trajs.shape[0], -1),
                       gt.reshape(-1).expand(pred_trajs.shape[0], -1))
    return int(torch.argmax(sims))


def mtp_loss(raw_coords: torch.Tensor, conf_logits: torch.Tensor,
             gt: torch.Tensor, cfg: LossConfig = LossConfig()) -> LossBreakdown:
    """Loss for one frame: raw_coords (M, N, 3), conf_logits (M,), gt (N, 3)."""
    if not (torch.isfinite(raw_coords).all() and torch.isfinite(conf_logits).all()
            and torch.isfinite(torch.as_tensor(gt)).all()):
        raise ValueError("non-finite loss inputs")
    gt = torch.as_tensor(gt, dtype=raw_coords.dtype, device=raw_coords.device)
    if raw_coords.shape[1:] != gt.shape:
        raise ValueError(f"shape mismatch: raw_coords {tuple(raw_coords.shape)} vs gt {tuple(gt.shape)}")

    decoded = decode_coords(raw_coords)
    with torch.no_grad():
        picked = select_mode(decoded.detach(), gt, cfg.mode_selection)

    regression = F.smooth_l1_loss(decoded[picked], gt, beta=cfg.smooth_l1_beta)
    target = torch.zeros_like(conf_logits)
    target[picked] = 1.0
    classification = F.binary_cross_entropy_with_logits(conf_logits, target)
    total = regression + cfg.alpha * classification
    return LossBreakdown(total=total, regression=regression,
                         classification=classification, selected_mode=picked)


def mtp_loss_batch(raw: torch.Tensor, gt: torch.Tensor, model_config: ModelConfig,
                   cfg: LossConfig = LossConfig()) -> LossBreakdown:
    """Mean loss over a batch: raw (B, D), gt (B, N, 3). selected_mode is the first sample's."""
    coords, logits = split_raw(raw, model_config)
    parts = [mtp_loss(coords[b], logits[b], gt[b], cfg) for b in range(raw.shape[0])]
    return LossBreakdown(
        total=torch.stack([p.total for p in parts]).mean(),
        regression=torch.stack([p.regression for p in parts]).mean(),
        classification=torch.stack([p.classification for p in parts]).mean(),
        selected_mode=parts[0].selected_mode,
    )
