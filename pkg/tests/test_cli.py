import csv
import json
import subprocess
import sys

import pytest

from embedtrack import load_frames, load_params, load_track_records
from embedtrack.cli import main

SIM_ARGS = [
    "--identity-count", "3",
    "--frame-count", "10",
    "--feature-dim", "4",
    "--archetype-separation", "8.0",
    "--seed", "5",
]

TRAIN_ARGS = ["--epochs", "3", "--hidden-dim", "8", "--embed-dim", "4"]


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--out", str(out)] + SIM_ARGS) == 0
    return out


@pytest.fixture
def trained_dir(tmp_path, sim_dir):
    out = tmp_path / "train"
    args = ["train", "--frames", str(sim_dir / "frames.jsonl"), "--out", str(out)]
    assert main(args + TRAIN_ARGS) == 0
    return out


def _manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text())


class TestSimulate:
    def test_writes_frames_and_manifest(self, sim_dir):
        frames = load_frames(sim_dir / "frames.jsonl")
        assert len(frames) == 10
        assert all(len(f.gt_boxes) == 3 for f in frames)
        manifest = _manifest(sim_dir)
        assert manifest["subcommand"] == "simulate"
        assert manifest["seed"] == 5
        assert manifest["outputs"] == {"frames": "frames.jsonl"}
        assert manifest["config"]["identity_count"] == 3

    def test_deterministic_output_bytes(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["simulate", "--out", str(out)] + SIM_ARGS) == 0
            outs.append(out)
        for fname in ("frames.jsonl", "manifest.json"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"identity_count": 2, "frame_count": 4, "feature_dim": 3}))
        out = tmp_path / "out"
        code = main(
            ["simulate", "--config", str(cfg_path), "--out", str(out), "--frame-count", "6"]
        )
        assert code == 0
        frames = load_frames(out / "frames.jsonl")
        assert len(frames) == 6  # flag beats file
        assert all(len(f.gt_boxes) == 2 for f in frames)  # file beats default

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"identity_cnt": 2}))
        code = main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
        assert code == 1
        assert "identity_cnt" in capsys.readouterr().err

    def test_invalid_value_reports_and_fails(self, tmp_path, capsys):
        code = main(["simulate", "--out", str(tmp_path / "out"), "--noise-sigma", "-1"])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert "noise_sigma" in err


class TestTrain:
    def test_writes_params_and_trace(self, sim_dir, trained_dir):
        params, seed, loss_cfg = load_params(trained_dir / "params.json")
        assert (params.hidden_dim, params.embed_dim) == (8, 4)
        assert params.feature_dim == 4
        assert seed == 0
        assert loss_cfg is not None

        with (trained_dir / "loss_trace.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        assert [int(r["epoch"]) for r in rows] == [0, 1, 2]
        assert all(float(r["mean_loss"]) >= 0 for r in rows)

        manifest = _manifest(trained_dir)
        assert manifest["config"]["train"]["epochs"] == 3
        assert manifest["config"]["batch_count"] == 9

    def test_config_file_covers_both_configs(self, tmp_path, sim_dir):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"epochs": 2, "hidden_dim": 6, "margin": 2.5}))
        out = tmp_path / "out"
        code = main(
            [
                "train",
                "--frames", str(sim_dir / "frames.jsonl"),
                "--config", str(cfg_path),
                "--out", str(out),
                "--embed-dim", "3",
            ]
        )
        assert code == 0
        params, _, loss_cfg = load_params(out / "params.json")
        assert (params.hidden_dim, params.embed_dim) == (6, 3)
        assert loss_cfg.margin == 2.5

    def test_refuses_single_identity_data(self, tmp_path, capsys):
        sim = tmp_path / "sim"
        assert main(
            ["simulate", "--out", str(sim), "--identity-count", "1", "--feature-dim", "4",
             "--frame-count", "6"]
        ) == 0
        code = main(
            ["train", "--frames", str(sim / "frames.jsonl"), "--out", str(tmp_path / "out")]
            + TRAIN_ARGS
        )
        assert code == 1
        assert "two distinct identities" in capsys.readouterr().err

    def test_missing_frames_file_fails_cleanly(self, tmp_path, capsys):
        code = main(
            ["train", "--frames", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "out")]
        )
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")


class TestCalibrate:
    def test_outputs(self, tmp_path, sim_dir, trained_dir):
        out = tmp_path / "calib"
        code = main(
            [
                "calibrate",
                "--frames", str(sim_dir / "frames.jsonl"),
                "--params", str(trained_dir / "params.json"),
                "--out", str(out),
            ]
        )
        assert code == 0
        doc = json.loads((out / "threshold.json").read_text())
        assert doc["threshold"] > 0
        assert doc["objective"] >= 0
        assert doc["pair_count"] == doc["same_count"] + doc["diff_count"]
        # 3 identities over 9 consecutive pairs, no dropout: 9 * 3 * 3 pairs
        assert doc["pair_count"] == 81

        with (out / "sweep.csv").open() as fh:
            sweep_rows = list(csv.DictReader(fh))
        assert any(float(r["h"]) == doc["threshold"] for r in sweep_rows)
        objectives = [float(r["objective"]) for r in sweep_rows]
        assert min(objectives) == doc["objective"]

        with (out / "histogram.csv").open() as fh:
            hist_rows = list(csv.DictReader(fh))
        same = sum(int(r["same_count"]) for r in hist_rows)
        diff = sum(int(r["diff_count"]) for r in hist_rows)
        assert (same, diff) == (doc["same_count"], doc["diff_count"])

    def test_single_identity_dev_set_fails(self, tmp_path, trained_dir, capsys):
        sim = tmp_path / "sim1"
        assert main(
            ["simulate", "--out", str(sim), "--identity-count", "1", "--feature-dim", "4",
             "--frame-count", "6"]
        ) == 0
        code = main(
            [
                "calibrate",
                "--frames", str(sim / "frames.jsonl"),
                "--params", str(trained_dir / "params.json"),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")


class TestTrackAndEval:
    def _run_track(self, tmp_path, sim_dir, trained_dir, threshold):
        out = tmp_path / "tracks"
        code = main(
            [
                "track",
                "--frames", str(sim_dir / "frames.jsonl"),
                "--params", str(trained_dir / "params.json"),
                "--threshold", str(threshold),
                "--out", str(out),
            ]
        )
        assert code == 0
        return out

    def test_track_writes_records(self, tmp_path, sim_dir, trained_dir):
        out = self._run_track(tmp_path, sim_dir, trained_dir, threshold=1e9)
        records = load_track_records(out / "tracks.jsonl")
        frames = load_frames(sim_dir / "frames.jsonl")
        kept = sum(1 for f in frames for d in f.detections if d.confidence >= 0.5)
        assert len(records) == kept
        assert all(r.track_id >= 0 for r in records)

    def test_eval_report_structure(self, tmp_path, sim_dir, trained_dir):
        tracks = self._run_track(tmp_path, sim_dir, trained_dir, threshold=1e9)
        out = tmp_path / "report"
        code = main(
            [
                "eval",
                "--tracks", str(tracks / "tracks.jsonl"),
                "--frames", str(sim_dir / "frames.jsonl"),
                "--out", str(out),
            ]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["mota"] <= 1.0
        assert 0.0 <= report["pair_accuracy"] <= 1.0
        assert 0.0 <= report["mean_ap"] <= 1.0
        counts = report["mot_counts"]
        assert counts["gt_total"] == 30
        assert counts["miss"] == 0  # every gt box has an exact detection

    def test_eval_counts_fixture(self, tmp_path):
        fixture = tmp_path / "counts.json"
        fixture.write_text(
            json.dumps(
                {
                    "mot": {"fp": 1, "miss": 2, "mismatch": 1, "gt_total": 10},
                    "pair": {"tp": 3, "tn": 4, "fp": 1, "fn": 2},
                }
            )
        )
        out = tmp_path / "out"
        assert main(["eval", "--counts", str(fixture), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["mota"] == pytest.approx(0.6)
        assert report["pair_accuracy"] == pytest.approx(0.7)

    def test_eval_needs_inputs(self, tmp_path, capsys):
        code = main(["eval", "--out", str(tmp_path / "out")])
        assert code == 1
        assert "--counts" in capsys.readouterr().err

    def test_eval_rejects_stray_track_frames(self, tmp_path, sim_dir, trained_dir, capsys):
        tracks_dir = self._run_track(tmp_path, sim_dir, trained_dir, threshold=1e9)
        tracks = tracks_dir / "tracks.jsonl"
        doc = json.loads(tracks.read_text().splitlines()[0])
        doc["frame_index"] = 99
        tracks.write_text(json.dumps(doc) + "\n")
        code = main(
            [
                "eval",
                "--tracks", str(tracks),
                "--frames", str(sim_dir / "frames.jsonl"),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 1
        assert "unknown frames" in capsys.readouterr().err

    def test_eval_rejects_multiple_cameras(self, tmp_path, sim_dir, trained_dir, capsys):
        frames = sim_dir / "frames.jsonl"
        lines = frames.read_text().splitlines()
        doc = json.loads(lines[0])
        doc["camera_id"] = 7
        merged = tmp_path / "frames.jsonl"
        merged.write_text("\n".join(lines + [json.dumps(doc)]) + "\n")
        tracks_dir = self._run_track(tmp_path, sim_dir, trained_dir, threshold=1e9)
        code = main(
            [
                "eval",
                "--tracks", str(tracks_dir / "tracks.jsonl"),
                "--frames", str(merged),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 1
        assert "single camera" in capsys.readouterr().err


class TestEntryPoints:
    def test_missing_subcommand_exits_with_usage(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0

    def test_module_invocation(self, tmp_path):
        out = tmp_path / "out"
        result = subprocess.run(
            [sys.executable, "-m", "embedtrack", "simulate", "--out", str(out)] + SIM_ARGS,
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0, result.stderr
        assert (out / "frames.jsonl").exists()
