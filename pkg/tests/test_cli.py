"""
Tests for the gazesplat command-line interface and its exit codes.
"""

import json

import pytest

from gazesplat.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, main

MICRO_DATASET = {
    "n_identities": 1,
    "n_frames": 2,
    "n_views": 1,
    "resolution": 16,
    "focal": 27.0,
    "heldout_frames": 1,
    "n_heldout_identities": 0,
    "gaze_grid": 2,
    "heldout_gaze_cell": [0, 0],
}


def write_json(path, data) -> str:
    path.write_text(json.dumps(data))
    return str(path)


class TestParser:
    pytestmark = pytest.mark.unit

    def test_ablation_flags(self):
        args = build_parser().parse_args(["train", "--dataset", "d", "--no-eye-rotation"])
        assert args.no_eye_rotation
        assert not args.no_two_stream

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


@pytest.mark.integration
class TestGenerateData:
    """generate-data exit codes."""

    def test_generate_then_refuse_to_overwrite(self, tmp_path):
        config = write_json(tmp_path / "data.json", MICRO_DATASET)
        out = str(tmp_path / "toy")
        assert main(["generate-data", "--config", config, "--out", out]) == EXIT_OK
        assert (tmp_path / "toy" / "manifest.jsonl").exists()
        assert main(["generate-data", "--config", config, "--out", out]) == EXIT_CONFIG
        assert main(["generate-data", "--config", config, "--out", out, "--force"]) == EXIT_OK

    def test_missing_out(self, tmp_path):
        assert main(["generate-data", "--config", write_json(tmp_path / "d.json", MICRO_DATASET)]) == EXIT_CONFIG

    def test_invalid_config(self, tmp_path):
        bad = dict(MICRO_DATASET, heldout_frames=5)
        assert main(["generate-data", "--config", write_json(tmp_path / "d.json", bad), "--out", str(tmp_path / "x")]) == EXIT_CONFIG


@pytest.mark.integration
class TestModelCommands:
    """train, redirect and evaluate against the shared fixtures."""

    def test_train(self, tiny_dataset, tmp_path):
        config = write_json(tmp_path / "train.json", {
            "n_face": 60, "n_eye": 20, "n_landmarks": 8, "feature_dim": 6,
            "tau_dim": tiny_dataset.config.tau_dim, "identity_dim": 2,
            "mlp_width": 8, "mlp_depth": 1, "renderer_width": 4,
            "loss_weights": {"gaze": 0.0},
        })
        out = tmp_path / "run"
        code = main([
            "train", "--config", config, "--dataset", str(tiny_dataset.root),
            "--out", str(out), "--max-steps", "1", "--no-expression-guided",
        ])
        assert code == EXIT_OK
        manifest = json.loads((out / "epoch_001" / "manifest.json").read_text())
        assert manifest["config"]["ablation"]["no_expression_guided"]

    def test_redirect_png(self, trained_run, tiny_dataset, tmp_path):
        key = tiny_dataset.records[0].key
        code = main([
            "redirect", "--checkpoint", str(trained_run.checkpoints[-1]),
            "--record", key, "--yaw", "0.3", "--out", str(tmp_path),
        ])
        assert code == EXIT_OK
        assert (tmp_path / f"{key}_redirected.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_redirect_sweep(self, trained_run, tiny_dataset, tmp_path):
        code = main([
            "redirect", "--checkpoint", str(trained_run.checkpoints[-1]),
            "--record", tiny_dataset.records[0].key, "--sweep", "3", "--out", str(tmp_path),
        ])
        assert code == EXIT_OK
        assert sorted(p.name for p in tmp_path.glob("frame_*.png")) == [
            "frame_000.png", "frame_001.png", "frame_002.png",
        ]

    def test_redirect_unknown_record(self, trained_run, tmp_path):
        code = main([
            "redirect", "--checkpoint", str(trained_run.checkpoints[-1]),
            "--record", "999_999_99", "--out", str(tmp_path),
        ])
        assert code == EXIT_CONFIG

    def test_missing_checkpoint(self, tmp_path):
        code = main([
            "redirect", "--checkpoint", str(tmp_path / "absent"),
            "--record", "000_000_00", "--out", str(tmp_path),
        ])
        assert code == EXIT_RUNTIME

    def test_evaluate_needs_a_checkpoint(self, tiny_dataset, tiny_oracle_dir):
        code = main(["evaluate", "--dataset", str(tiny_dataset.root), "--oracle-dir", tiny_oracle_dir])
        assert code == EXIT_CONFIG

    def test_evaluate_writes_reports(self, trained_run, tiny_dataset, tiny_oracle_dir, tmp_path, capsys):
        config = write_json(tmp_path / "eval.json", {"splits": ["heldout_frame"], "max_pairs_per_identity": 1})
        code = main([
            "evaluate", "--config", config, "--checkpoint", str(trained_run.checkpoints[-1]),
            "--dataset", str(tiny_dataset.root), "--oracle-dir", tiny_oracle_dir, "--out", str(tmp_path / "eval"),
        ])
        assert code == EXIT_OK
        assert "gaze error (deg)" in capsys.readouterr().out
        report = json.loads((tmp_path / "eval" / "report.json").read_text())
        assert report["n_pairs"] == 2
