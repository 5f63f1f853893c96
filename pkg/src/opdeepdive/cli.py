"""Command-line entry points: gen-data, train, eval, viz."""

from __future__ import annotations

import json
import os
from pathlib import Path

import click
import yaml

from .data import load_sequence
from .metrics import write_per_point_csv, write_report_json
from .synthetic import SyntheticSpec, generate_synthetic
from .training import (SEED_ENV_VAR, TrainConfig, anchors_for_mode, evaluate,
                       load_checkpoint, train, visualize)
from .viz import plot_comfort_report, plot_imitation_report


@click.group()
def main():
    """End-to-end trajectory planner: data generation, training, evaluation, viz."""


def _load_sequences(data_dir: Path):
    seq_dirs = sorted(p for p in Path(data_dir).iterdir() if p.is_dir())
    if not seq_dirs:
        raise click.ClickException(f"no sequence directories in {data_dir}")
    return [load_sequence(p) for p in seq_dirs]


@main.command("gen-data")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="YAML file with a top-level seed and a list of sequence specs.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def gen_data(spec_path, out_dir):
    """Generate synthetic sequences into OUT, one directory per sequence."""
    with open(spec_path) as f:
        doc = yaml.safe_load(f)
    base_seed = int(doc.get("seed", 0))
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        base_seed = int(env_seed)
    out_dir = Path(out_dir)
    for i, entry in enumerate(doc["sequences"]):
        entry = dict(entry)
        name = entry.pop("name", f"seq_{i:03d}")
        entry.setdefault("seed", base_seed + i)
        spec = SyntheticSpec(**entry)
        path = generate_synthetic(spec, out_dir / name)
        click.echo(f"wrote {path}")


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--resume", type=click.Path(exists=True), default=None)
def train_cmd(config_path, data_dir, out_dir, resume):
    """Train on all sequences under DATA; checkpoints and loss log go to OUT."""
    cfg = TrainConfig.from_file(config_path)
    sequences = _load_sequences(Path(data_dir))
    result = train(cfg, sequences, out_dir, resume=resume)
    click.echo(f"finished {result.updates} updates "
               f"({result.epochs_completed} epochs); final: {result.final_checkpoint}")


@main.command("eval")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--distance", type=click.Choice(["3d", "xy"]), default="3d",
              help="Distance used for errors and AP hits.")
def eval_cmd(ckpt, data_dir, report_path, distance):
    """Evaluate CKPT on DATA; writes JSON report, per-point CSV, and figures."""
    model, train_cfg, _ = load_checkpoint(ckpt)
    anchors = anchors_for_mode(train_cfg.anchor_mode)
    sequences = _load_sequences(Path(data_dir))
    result = evaluate(model, anchors, sequences, distance=distance)

    report_path = Path(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    write_report_json(report_path, result.imitation, result.comfort)
    with open(report_path) as f:
        doc = json.load(f)
    doc["frames_per_second"] = result.frames_per_second
    doc["num_frames"] = result.num_frames
    report_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    stem = report_path.with_suffix("")
    write_per_point_csv(Path(f"{stem}_per_point.csv"), result.per_point_rows)
    plot_imitation_report(result.imitation, Path(f"{stem}_imitation.png"))
    if result.comfort is not None:
        plot_comfort_report(result.comfort, Path(f"{stem}_comfort.png"))
    click.echo(f"report written to {report_path} "
               f"({result.num_frames} frames, {result.frames_per_second:.1f} FPS)")


@main.command("viz")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--seq", "seq_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--stride", default=1, show_default=True)
def viz_cmd(ckpt, seq_dir, out_dir, stride):
    """Render per-frame BEV plots of predictions vs ground truth."""
    model, train_cfg, _ = load_checkpoint(ckpt)
    anchors = anchors_for_mode(train_cfg.anchor_mode)
    seq = load_sequence(Path(seq_dir))
    files = visualize(model, anchors, seq, out_dir, stride=stride)
    click.echo(f"wrote {len(files)} plots to {out_dir}")


if __name__ == "__main__":
    main()
