import json

import pytest
import yaml
from click.testing import CliRunner

from opdeepdive.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """gen-data -> train -> eval -> viz, exercised once through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()

    gen_spec = root / "gen.yaml"
    gen_spec.write_text(yaml.safe_dump({
        "seed": 5,
        "sequences": [
            {"name": "straight_a", "path_type": "straight", "speed": 8.0,
             "duration": 11.5, "rate_hz": 4.0},
            {"name": "arc_a", "path_type": "arc", "speed": 8.0, "duration": 11.5,
             "rate_hz": 4.0, "radius": 60.0},
        ],
    }))
    data_dir = root / "data"
    res = runner.invoke(main, ["gen-data", "--spec", str(gen_spec),
                               "--out", str(data_dir)])
    assert res.exit_code == 0, res.output

    train_cfg = root / "train.yaml"
    train_cfg.write_text(yaml.safe_dump({
        "batch_size": 2, "learning_rate": 1e-3, "accumulation_steps": 1,
        "epochs": 100, "max_updates": 4, "seed": 0, "backbone_variant": "tiny",
    }))
    run_dir = root / "run"
    res = runner.invoke(main, ["train", "--config", str(train_cfg),
                               "--data", str(data_dir), "--out", str(run_dir)])
    assert res.exit_code == 0, res.output

    return root, runner, data_dir, run_dir


def test_gen_data_layout(workspace):
    root, _, data_dir, _ = workspace
    for name in ("straight_a", "arc_a"):
        seq = data_dir / name
        assert (seq / "poses.csv").exists()
        assert (seq / "calib.json").exists()
        assert (seq / "meta.json").exists()
        assert sorted((seq / "frames").glob("*.jpg"))


def test_train_outputs(workspace):
    _, _, _, run_dir = workspace
    assert (run_dir / "final.pt").exists()
    log = (run_dir / "loss_log.csv").read_text().splitlines()
    assert log[0] == "update,total,regression,classification"
    assert len(log) == 5  # header + 4 updates


def test_eval_writes_report_csv_and_figures(workspace):
    root, runner, data_dir, run_dir = workspace
    report = root / "reports" / "report.json"
    res = runner.invoke(main, ["eval", "--ckpt", str(run_dir / "final.pt"),
                               "--data", str(data_dir), "--report", str(report)])
    assert res.exit_code == 0, res.output

    doc = json.loads(report.read_text())
    assert set(doc["imitation"]) == {"0-10", "10-20", "20-30", "30-50", "50+"}
    assert "comfort" in doc
    assert doc["frames_per_second"] > 0

    per_point = report.parent / "report_per_point.csv"
    lines = per_point.read_text().splitlines()
    assert lines[0].startswith("sequence_id,frame_index,anchor_time")
    assert len(lines) > 1
    assert (report.parent / "report_imitation.png").stat().st_size > 0
    assert (report.parent / "report_comfort.png").stat().st_size > 0


def test_eval_reports_deterministic(workspace):
    root, runner, data_dir, run_dir = workspace
    outs = []
    for name in ("r1.json", "r2.json"):
        path = root / name
        res = runner.invoke(main, ["eval", "--ckpt", str(run_dir / "final.pt"),
                                   "--data", str(data_dir), "--report", str(path)])
        assert res.exit_code == 0, res.output
        doc = json.loads(path.read_text())
        doc.pop("frames_per_second")  # wall-clock, legitimately varies
        outs.append(doc)
    assert outs[0] == outs[1]


def test_viz_writes_bev_plots(workspace):
    root, runner, data_dir, run_dir = workspace
    out = root / "viz"
    res = runner.invoke(main, ["viz", "--ckpt", str(run_dir / "final.pt"),
                               "--seq", str(data_dir / "arc_a"), "--out", str(out),
                               "--stride", "3"])
    assert res.exit_code == 0, res.output
    files = sorted(out.glob("bev_*.png"))
    assert files
    assert all(f.stat().st_size > 0 for f in files)


def test_gen_data_env_seed_override(tmp_path, monkeypatch):
    runner = CliRunner()
    spec = tmp_path / "gen.yaml"
    spec.write_text(yaml.safe_dump({
        "seed": 1,
        "sequences": [{"path_type": "straight", "speed": 8.0, "duration": 11.0,
                       "rate_hz": 2.0}],
    }))
    res_a = runner.invoke(main, ["gen-data", "--spec", str(spec),
                                 "--out", str(tmp_path / "a")])
    monkeypatch.setenv("OPDD_SEED", "1")
    res_b = runner.invoke(main, ["gen-data", "--spec", str(spec),
                                 "--out", str(tmp_path / "b")])
    assert res_a.exit_code == 0 and res_b.exit_code == 0
    a = (tmp_path / "a" / "seq_000" / "poses.csv").read_bytes()
    b = (tmp_path / "b" / "seq_000" / "poses.csv").read_bytes()
    assert a == b
