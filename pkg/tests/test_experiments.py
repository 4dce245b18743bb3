"""
Tests for the ablation runner and the augmentation experiment.
"""

import csv
import json

import pytest

from gazesplat.errors import InvalidArgumentError
from gazesplat.experiments import AugmentRow, ablate, augment_experiment, summarize
from gazesplat.models import AblationFlags, AugmentConfig, EvalConfig, FrameSplit


@pytest.fixture
def augment_config(trained_run, tiny_dataset, tiny_oracle_dir, tmp_path):
    def make(**overrides) -> AugmentConfig:
        values = dict(
            checkpoint=str(trained_run.checkpoints[-1]),
            dataset=str(tiny_dataset.root),
            oracle_dir=tiny_oracle_dir,
            output_dir=str(tmp_path / "augment"),
            k_real=[1, 2],
            total=4,
            seeds=[0],
            finetune_steps=2,
            identity_fit_steps=1,
        )
        values.update(overrides)
        return AugmentConfig(**values)

    return make


@pytest.mark.integration
class TestAugmentExperiment:
    """Fine-tuning sweeps over k real samples."""

    def test_rows_and_outputs(self, augment_config, tmp_path):
        rows = augment_experiment(augment_config())
        assert [(r.seed, r.k_real, r.n_generated) for r in rows] == [(0, 1, 3), (0, 2, 2)]
        for row in rows:
            assert 0.0 <= row.error_augmented_deg <= 180.0
            assert 0.0 <= row.error_real_only_deg <= 180.0

        out = tmp_path / "augment"
        with open(out / "augment.csv", newline="") as handle:
            table = list(csv.DictReader(handle))
        assert [int(r["k_real"]) for r in table] == [1, 2]

        summary = json.loads((out / "augment.json").read_text())
        assert summary["identity"] == 2
        assert summary["k_real"] == [1, 2]
        assert len(summary["rows"]) == 2

    def test_explicit_identity(self, augment_config, tmp_path):
        augment_experiment(augment_config(identity=0, k_real=[1], total=2))
        summary = json.loads((tmp_path / "augment" / "augment.json").read_text())
        assert summary["identity"] == 0

    def test_k_above_total(self, augment_config):
        with pytest.raises(InvalidArgumentError):
            augment_experiment(augment_config(k_real=[5], total=4))

    def test_k_must_leave_test_samples(self, augment_config):
        # the held-out identity has ten real samples
        with pytest.raises(InvalidArgumentError):
            augment_experiment(augment_config(k_real=[10], total=20))


class TestSummarize:
    pytestmark = pytest.mark.unit

    def test_means_and_delta(self):
        rows = [
            AugmentRow(seed=0, k_real=1, n_generated=9, error_augmented_deg=4.0, error_real_only_deg=6.0),
            AugmentRow(seed=1, k_real=1, n_generated=9, error_augmented_deg=2.0, error_real_only_deg=6.0),
            AugmentRow(seed=0, k_real=2, n_generated=8, error_augmented_deg=5.0, error_real_only_deg=5.0),
        ]
        summary = summarize(rows)
        assert summary["k_real"] == [1, 2]
        assert summary["augmented_mean_deg"] == [3.0, 5.0]
        assert summary["real_only_mean_deg"] == [6.0, 5.0]
        assert summary["mean_delta_deg"] == pytest.approx(-2.0)
        assert not summary["augmented_monotone_nonincreasing"]
        assert summary["n_seeds"] == 2

    def test_row_delta(self):
        row = AugmentRow(seed=0, k_real=3, n_generated=7, error_augmented_deg=1.5, error_real_only_deg=2.0)
        assert row.delta_deg == pytest.approx(-0.5)


@pytest.mark.integration
class TestAblate:
    """Training and evaluating variants side by side."""

    def test_full_model_comes_first(self, make_train_config, tiny_dataset, tiny_oracle_dir, tmp_path):
        base = make_train_config(tmp_path, max_steps=1)
        template = EvalConfig(
            checkpoint="",
            dataset=str(tiny_dataset.root),
            oracle_dir=tiny_oracle_dir,
            splits=[FrameSplit.HELDOUT_FRAME],
            max_pairs_per_identity=1,
        )
        reports = ablate(base, template, [AblationFlags(no_eye_rotation=True)])

        assert [r.variant for r in reports] == ["full", "no_eye_rotation"]
        assert all(r.n_pairs == 2 for r in reports)
        assert (tmp_path / "full" / "report.json").exists()
        assert (tmp_path / "no_eye_rotation" / "epoch_001").is_dir()
        saved = json.loads((tmp_path / "ablation.json").read_text())
        assert [r["variant"] for r in saved] == ["full", "no_eye_rotation"]
        assert (tmp_path / "ablation.txt").read_text().startswith("variant")
