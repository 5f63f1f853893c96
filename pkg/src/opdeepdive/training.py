"""Training loop, evaluation runner, checkpointing, and BEV visualization.

Training follows the published recipe: AdamW, lr 1e-4, batch 48, gradient
accumulation over 40 steps, global grad-norm clip 1.0, zero-initialized GRU
hidden state per sequence. The batch dimension holds independent sequence
streams advanced in lockstep; hidden state is carried across frames within a
stream but detached from the graph between frames.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import yaml

from .data import SequenceRecord, TrainingSample, build_samples
from .loss import LossBreakdown, LossConfig, mtp_loss_batch
from .metrics import (ComfortReport, ImitationReport, comfort_metrics,
                      imitation_metrics, merge_comfort_reports, pointwise_errors)
from .model import (ModelConfig, PlannerModel, build_model, decode_output,
                    select_best)
from .trajectory import AnchorSet, comma_anchor_set, uniform_anchor_set
from .viz import plot_bev_frame

SEED_ENV_VAR = "OPDD_SEED"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 48
    learning_rate: float = 1e-4
    grad_clip_norm: float = 1.0
    accumulation_steps: int = 40
    epochs: int = 1
    seed: int = 0
    weight_decay: float = 0.01
    stride: int = 1
    max_updates: Optional[int] = None
    anchor_mode: str = "comma"  # "comma" (33 anchors / 10 s) or "nuscenes" (10 / 5 s)
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if min(self.batch_size, self.epochs, self.stride) < 1 or self.accumulation_steps < 1:
            raise ValueError("batch_size, epochs, stride, accumulation_steps must be >= 1")
        if self.learning_rate <= 0 or self.grad_clip_norm <= 0:
            raise ValueError("learning_rate and grad_clip_norm must be positive")
        if self.anchor_mode not in ("comma", "nuscenes"):
            raise ValueError(f"unknown anchor_mode {self.anchor_mode!r}")
        expected_points = len(anchors_for_mode(self.anchor_mode))
        if self.model.num_points != expected_points:
            object.__setattr__(self, "model",
                               replace(self.model, num_points=expected_points))

    @property
    def anchors(self) -> AnchorSet:
        return anchors_for_mode(self.anchor_mode)

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "grad_clip_norm": self.grad_clip_norm,
            "accumulation_steps": self.accumulation_steps,
            "epochs": self.epochs,
            "seed": self.seed,
            "weight_decay": self.weight_decay,
            "stride": self.stride,
            "max_updates": self.max_updates,
            "anchor_mode": self.anchor_mode,
            "alpha": self.loss.alpha,
            "smooth_l1_beta": self.loss.smooth_l1_beta,
            "mode_selection": self.loss.mode_selection,
            "num_modes": self.model.num_modes,
            "backbone_variant": self.model.backbone_variant,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        loss = LossConfig(
            alpha=doc.pop("alpha", 1.0),
            smooth_l1_beta=doc.pop("smooth_l1_beta", 1.0),
            mode_selection=doc.pop("mode_selection", "trajectory"),
        )
        anchor_mode = doc.pop("anchor_mode", "comma")
        model = ModelConfig(
            num_modes=doc.pop("num_modes", 5),
            num_points=len(anchors_for_mode(anchor_mode)),
            backbone_variant=doc.pop("backbone_variant", "tiny"),
        )
        known = {"batch_size", "learning_rate", "grad_clip_norm", "accumulation_steps",
                 "epochs", "seed", "weight_decay", "stride", "max_updates"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(anchor_mode=anchor_mode, loss=loss, model=model, **doc)
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            cfg = replace(cfg, seed=int(env_seed))
        return cfg

    @classmethod
    def from_file(cls, path: Path | str) -> "TrainConfig":
        with open(path) as f:
            doc = yaml.safe_load(f) or {}
        return cls.from_dict(doc)


def anchors_for_mode(mode: str) -> AnchorSet:
    if mode == "comma":
        return comma_anchor_set()
    if mode == "nuscenes":
        return uniform_anchor_set(10, 5.0)
    raise ValueError(f"unknown anchor_mode {mode!r}")


def save_checkpoint(path: Path | str, model: PlannerModel, train_config: TrainConfig,
                    optimizer: Optional[torch.optim.Optimizer] = None,
                    updates: int = 0, steps: int = 0, epoch: int = 0) -> None:
    payload = {
        "model_config": model.config.to_dict(),
        "train_config": train_config.to_dict(),
        "state_dict": model.state_dict(),
        "updates": updates,
        "steps": steps,
        "epoch": epoch,
        "torch_rng_state": torch.get_rng_state(),
    }
    if optimizer is not None:
        payload["optimizer"] = optimizer.state_dict()
    torch.save(payload, path)


def load_checkpoint(path: Path | str) -> Tuple[PlannerModel, TrainConfig, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    train_config = TrainConfig.from_dict(payload["train_config"])
    model = build_model(ModelConfig.from_dict(payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    return model, train_config, payload


class _StreamScheduler:
    """Assigns sequences to batch slots round-robin; each slot cycles its queue."""

    def __init__(self, per_seq_samples: List[List[TrainingSample]], num_slots: int):
        self.slots = [per_seq_samples[k::num_slots] for k in range(num_slots)]
        self.queue_pos = [0] * num_slots
        self.sample_pos = [0] * num_slots

    def current(self, slot: int) -> TrainingSample:
        return self.slots[slot][self.queue_pos[slot]][self.sample_pos[slot]]

    def at_sequence_start(self, slot: int) -> bool:
        return self.sample_pos[slot] == 0

    def advance(self, slot: int) -> None:
        self.sample_pos[slot] += 1
        if self.sample_pos[slot] >= len(self.slots[slot][self.queue_pos[slot]]):
            self.sample_pos[slot] = 0
            self.queue_pos[slot] = (self.queue_pos[slot] + 1) % len(self.slots[slot])


@dataclass
class TrainResult:
    final_checkpoint: Path
    history: List[dict]  # one entry per optimizer update
    updates: int
    epochs_completed: int
    skipped_samples: int


def _set_seeds(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)


def train(cfg: TrainConfig, sequences: Sequence[SequenceRecord], out_dir: Path | str,
          resume: Optional[Path | str] = None, device: str = "cpu") -> TrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _set_seeds(cfg.seed)

    anchors = cfg.anchors
    per_seq: List[List[TrainingSample]] = []
    skipped = 0
    for seq in sequences:
        samples, n_skip = build_samples(seq, anchors, cfg.stride)
        skipped += n_skip
        if samples:
            per_seq.append(samples)
    if not per_seq:
        raise ValueError("training split has no usable samples")

    total_samples = sum(len(s) for s in per_seq)
    num_slots = min(cfg.batch_size, len(per_seq))
    steps_per_epoch = max(1, int(np.ceil(total_samples / num_slots)))
    target_steps = cfg.epochs * steps_per_epoch

    if resume is not None:
        model, _, payload = load_checkpoint(resume)
        model = model.to(device)
        optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate,
                                      weight_decay=cfg.weight_decay)
        if "optimizer" in payload:
            optimizer.load_state_dict(payload["optimizer"])
            # the resuming config owns the learning rate (allows staged schedules)
            for group in optimizer.param_groups:
                group["lr"] = cfg.learning_rate
        updates, steps, epoch = payload["updates"], payload["steps"], payload["epoch"]
    else:
        model = build_model(cfg.model).to(device)
        optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate,
                                      weight_decay=cfg.weight_decay)
        updates, steps, epoch = 0, 0, 0

    scheduler = _StreamScheduler(per_seq, num_slots)
    # Fast-forward stream positions after a resume so the data order lines up.
    for _ in range(steps):
        for slot in range(num_slots):
            scheduler.advance(slot)

    hidden = model.init_hidden(num_slots, device=device)
    model.train()
    optimizer.zero_grad()

    history: List[dict] = []
    log_path = out_dir / "loss_log.csv"
    log_file = open(log_path, "a" if resume is not None else "w", newline="")
    log_writer = csv.writer(log_file)
    if resume is None:
        log_writer.writerow(["update", "total", "regression", "classification"])

    accum_breakdown = np.zeros(3)
    accum_count = 0

    def finished() -> bool:
        if cfg.max_updates is not None and updates >= cfg.max_updates:
            return True
        return steps >= target_steps and steps % cfg.accumulation_steps == 0

    try:
        while not finished():
            inputs = []
            gts = []
            for slot in range(num_slots):
                if scheduler.at_sequence_start(slot):
                    hidden[slot] = 0.0
                sample = scheduler.current(slot)
                inputs.append(torch.from_numpy(sample.inputs))
                gts.append(torch.from_numpy(sample.ground_truth.points.astype(np.float32)))
            batch = torch.stack(inputs).to(device)
            gt_batch = torch.stack(gts).to(device)

            raw, new_hidden = model(batch, hidden)
            hidden = new_hidden.detach()
            breakdown: LossBreakdown = mtp_loss_batch(raw, gt_batch, cfg.model, cfg.loss)
            if not torch.isfinite(breakdown.total):
                dump = out_dir / "diagnostic_batch.npz"
                np.savez(dump, inputs=batch.cpu().numpy(), gt=gt_batch.cpu().numpy())
                raise RuntimeError(f"non-finite loss at step {steps}; batch dumped to {dump}")
            (breakdown.total / cfg.accumulation_steps).backward()

            accum_breakdown += [float(breakdown.total.detach()),
                                float(breakdown.regression.detach()),
                                float(breakdown.classification.detach())]
            accum_count += 1
            for slot in range(num_slots):
                scheduler.advance(slot)
            steps += 1

            if steps % cfg.accumulation_steps == 0:
                if np.isfinite(cfg.grad_clip_norm):
                    torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip_norm)
                optimizer.step()
                optimizer.zero_grad()
                updates += 1
                entry = {
                    "update": updates,
                    "total": accum_breakdown[0] / accum_count,
                    "regression": accum_breakdown[1] / accum_count,
                    "classification": accum_breakdown[2] / accum_count,
                }
                history.append(entry)
                log_writer.writerow([entry["update"], f"{entry['total']:.6f}",
                                     f"{entry['regression']:.6f}",
                                     f"{entry['classification']:.6f}"])
                accum_breakdown[:] = 0
                accum_count = 0

            if steps % steps_per_epoch == 0:
                epoch = steps // steps_per_epoch
                save_checkpoint(out_dir / f"ckpt_epoch_{epoch:03d}.pt", model, cfg,
                                optimizer, updates, steps, epoch)
    finally:
        log_file.close()

    final = out_dir / "final.pt"
    save_checkpoint(final, model, cfg, optimizer, updates, steps, epoch)
    return TrainResult(final_checkpoint=final, history=history, updates=updates,
                       epochs_completed=epoch, skipped_samples=skipped)


@dataclass
class EvalResult:
    imitation: ImitationReport
    comfort: Optional[ComfortReport]
    per_point_rows: List[list]
    frames_per_second: float
    num_frames: int


def evaluate(model: PlannerModel, anchors: AnchorSet,
             sequences: Sequence[SequenceRecord], stride: int = 1,
             distance: str = "3d", device: str = "cpu") -> EvalResult:
    """Stream each sequence with a fresh zero hidden state; aggregate metrics."""
    if len(anchors) != model.config.num_points:
        raise ValueError(
            f"checkpoint predicts {model.config.num_points} points but the anchor "
            f"set has {len(anchors)}"
        )
    model = model.to(device).eval()
    compute_comfort = anchors == comma_anchor_set()

    pairs = []
    rows: List[list] = []
    comfort_reports = []
    elapsed = 0.0
    n_frames = 0
    with torch.no_grad():
        for seq in sequences:
            samples, _ = build_samples(seq, anchors, stride)
            hidden = model.init_hidden(1, device=device)
            for sample in samples:
                start = time.perf_counter()
                raw, hidden = model(torch.from_numpy(sample.inputs).unsqueeze(0).to(device),
                                    hidden)
                elapsed += time.perf_counter() - start
                n_frames += 1
                pred = decode_output(raw[0].cpu(), model.config, anchors)
                best = select_best(pred)
                gt = sample.ground_truth
                pairs.append((best, gt))
                if compute_comfort:
                    comfort_reports.append(comfort_metrics(best))
                d, dx, dy, buckets = pointwise_errors(best, gt, distance)
                for k in range(len(anchors)):
                    rows.append([
                        sample.sequence_id, sample.frame_index, float(anchors.times[k]),
                        *(float(c) for c in gt.points[k]),
                        *(float(c) for c in best.points[k]),
                        float(d[k]), float(dx[k]), float(dy[k]), int(buckets[k]),
                    ])

    if not pairs:
        raise ValueError("no evaluable samples in the given sequences")
    return EvalResult(
        imitation=imitation_metrics(pairs, distance),
        comfort=merge_comfort_reports(comfort_reports) if comfort_reports else None,
        per_point_rows=rows,
        frames_per_second=n_frames / elapsed if elapsed > 0 else float("inf"),
        num_frames=n_frames,
    )


def visualize(model: PlannerModel, anchors: AnchorSet, seq: SequenceRecord,
              out_dir: Path | str, stride: int = 1, device: str = "cpu") -> List[Path]:
    """One BEV plot per evaluable frame: pred0..predM-1 plus gt, named bev_%06d.png."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = model.to(device).eval()
    files = []
    with torch.no_grad():
        samples, _ = build_samples(seq, anchors, stride)
        hidden = model.init_hidden(1, device=device)
        for sample in samples:
            raw, hidden = model(torch.from_numpy(sample.inputs).unsqueeze(0).to(device),
                                hidden)
            pred = decode_output(raw[0].cpu(), model.config, anchors)
            path = out_dir / f"bev_{sample.frame_index:06d}.png"
            plot_bev_frame(pred, sample.ground_truth, path,
                           title=f"{seq.sequence_id} frame {sample.frame_index}")
            files.append(path)
    return files
