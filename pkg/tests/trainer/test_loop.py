"""
Tests for training, checkpoint round trips and identity fitting.
"""

import copy
import json
import math

import pytest
import torch

import gazesplat.trainer.loop as loop
from gazesplat.errors import (
    CheckpointError,
    InvalidArgumentError,
    InvalidConfigurationError,
    MissingDependencyError,
    TrainingFailureError,
)
from gazesplat.losses.image import default_extractor
from gazesplat.models import AblationFlags, FrameSplit, IdentitySplit, LossWeights
from gazesplat.toyscene.dataset import ToyDataset
from gazesplat.trainer.loop import (
    TRAIN_LOG,
    build_model,
    build_optimizer,
    fit_identity,
    frame_loss,
    load_frames,
    load_model,
    save_model,
    train,
)

pytestmark = pytest.mark.integration


def training_frames(dataset: ToyDataset):
    return load_frames(dataset, dataset.select([FrameSplit.TRAIN], IdentitySplit.TRAIN))


# ============================================================================
# Training Runs
# ============================================================================

class TestTrain:
    """Short training runs on the shared tiny dataset."""

    def test_checkpoints_and_log(self, trained_run):
        names = [p.name for p in trained_run.checkpoints]
        assert names == ["epoch_000", "epoch_001"]
        assert len(trained_run.loss_trace) == 4

        log_path = trained_run.checkpoints[0].parent / TRAIN_LOG
        entries = [json.loads(line) for line in log_path.read_text().splitlines()]
        assert [e["step"] for e in entries] == [0, 1, 2, 3]
        for entry in entries:
            for key in ("epoch", "lr", "total", "L1_h", "ssim_mh", "vgg_e"):
                assert key in entry
        assert [e["total"] for e in entries] == pytest.approx(trained_run.loss_trace)
        assert entries[1]["lr"] < entries[0]["lr"]

    def test_probe_psnr_is_reported(self, trained_run):
        assert math.isfinite(trained_run.init_psnr)
        assert math.isfinite(trained_run.final_psnr)
        assert not trained_run.model.training

    def test_runs_are_deterministic(self, make_train_config, tmp_path):
        a = train(make_train_config(tmp_path / "a", max_steps=2))
        b = train(make_train_config(tmp_path / "b", max_steps=2))
        assert a.loss_trace == b.loss_trace
        for p, q in zip(a.model.parameters(), b.model.parameters()):
            assert torch.equal(p, q)

    @pytest.mark.slow
    def test_hundred_step_traces_are_identical(self, make_train_config, tmp_path):
        a = train(make_train_config(tmp_path / "a", epochs=20, max_steps=100))
        b = train(make_train_config(tmp_path / "b", epochs=20, max_steps=100))
        assert len(a.loss_trace) == 100
        assert a.loss_trace == b.loss_trace

    @pytest.mark.slow
    def test_smoothed_loss_does_not_increase(self, make_train_config, tmp_path):
        result = train(make_train_config(tmp_path, epochs=100, max_steps=500, lr_init=1e-3))
        trace = result.loss_trace
        assert len(trace) == 500
        smoothed = [sum(trace[i:i + 50]) / 50 for i in range(0, 500, 50)]
        for earlier, later in zip(smoothed, smoothed[1:]):
            assert later <= earlier * 1.02
        assert smoothed[-1] < smoothed[0]

    def test_first_logged_loss_matches_the_initial_checkpoint(self, trained_run, tiny_dataset):
        model, config = load_model(trained_run.checkpoints[0])
        frames = training_frames(tiny_dataset)
        first = torch.randperm(len(frames), generator=torch.Generator().manual_seed(config.seed))[0]
        with torch.no_grad():
            loss, _ = frame_loss(model, frames[int(first)], config, extractor=default_extractor())
        assert float(loss) == pytest.approx(trained_run.loss_trace[0], rel=1e-5)

    def test_gaze_loss_needs_an_oracle(self, make_train_config, tmp_path):
        config = make_train_config(tmp_path, loss_weights=LossWeights(gaze=0.1))
        with pytest.raises(MissingDependencyError):
            train(config)

    def test_gaze_loss_is_logged(self, make_train_config, tiny_oracle_dir, tmp_path):
        config = make_train_config(
            tmp_path, max_steps=1, loss_weights=LossWeights(gaze=0.1), oracle_dir=tiny_oracle_dir,
        )
        train(config)
        entry = json.loads((tmp_path / TRAIN_LOG).read_text().splitlines()[0])
        assert entry["gaze"] >= 0.0

    def test_tau_mismatch(self, make_train_config, tiny_dataset, tmp_path):
        config = make_train_config(tmp_path, tau_dim=tiny_dataset.config.tau_dim - 1)
        with pytest.raises(InvalidConfigurationError):
            build_model(config, tiny_dataset)

    def test_non_finite_loss_stops_training(self, make_train_config, tmp_path, monkeypatch):
        def exploding(*args, **kwargs):
            return torch.tensor(float("nan"), requires_grad=True), {"total": float("nan")}

        monkeypatch.setattr(loop, "frame_loss", exploding)
        with pytest.raises(TrainingFailureError) as exc_info:
            train(make_train_config(tmp_path))
        assert exc_info.value.last_checkpoint == str(tmp_path / "epoch_000")
        load_model(tmp_path / "epoch_000")

    def test_merged_ablation_trains(self, make_train_config, tmp_path):
        result = train(make_train_config(
            tmp_path, max_steps=1, ablation=AblationFlags(no_two_stream=True),
        ))
        assert result.model.regions == ("head",)
        entry = json.loads((tmp_path / TRAIN_LOG).read_text().splitlines()[0])
        assert "L1_h" in entry and "L1_mh" in entry
        assert "L1_f" not in entry

    def test_optimizer_groups_use_multipliers(self, tiny_train_config, tiny_dataset):
        model = build_model(tiny_train_config, tiny_dataset)
        optimizer = build_optimizer(model, tiny_train_config)
        lrs = {group["name"]: group["lr"] for group in optimizer.param_groups}
        assert lrs["scales"] == pytest.approx(0.5 * tiny_train_config.lr_init)
        assert lrs["centers"] == pytest.approx(tiny_train_config.lr_init)


# ============================================================================
# Checkpoints
# ============================================================================

class TestModelCheckpoints:
    """save_model / load_model round trips."""

    def test_render_is_bit_exact_after_reload(self, trained_run, tiny_dataset, tmp_path):
        config = load_model(trained_run.checkpoints[-1])[1]
        path = save_model(trained_run.model, config, tmp_path, "copy")
        reloaded, _ = load_model(path)
        condition = tiny_dataset.condition(tiny_dataset.records[0])
        with torch.no_grad():
            assert torch.equal(reloaded.render_head(condition), trained_run.model.render_head(condition))
        assert torch.equal(reloaded.trained_identities, trained_run.model.trained_identities)

    def test_directory_resolves_to_latest_epoch(self, trained_run):
        model, _ = load_model(trained_run.checkpoints[0].parent)
        for p, q in zip(model.parameters(), trained_run.model.parameters()):
            assert torch.equal(p, q)

    def test_oracle_checkpoint_rejected(self, tiny_oracle_dir):
        with pytest.raises(CheckpointError):
            load_model(f"{tiny_oracle_dir}/training")

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_model(tmp_path / "absent")


# ============================================================================
# Identity Fitting
# ============================================================================

class TestFitIdentity:
    """Test-time fitting of unseen identities."""

    @pytest.fixture
    def heldout_frames(self, tiny_dataset):
        heldout = tiny_dataset.identities(IdentitySplit.HELDOUT)[0]
        return load_frames(tiny_dataset, tiny_dataset.select(identities=[heldout])[:2])

    def test_fits_only_the_identity_code(self, trained_run, heldout_frames):
        model = copy.deepcopy(trained_run.model)
        identity = heldout_frames[0].condition.identity
        config = load_model(trained_run.checkpoints[-1])[1]
        before = {name: p.clone() for name, p in model.named_parameters()}

        fit_identity(model, heldout_frames, config, steps=2, lr=1e-2)

        assert bool(model.trained_identities[identity])
        assert not torch.equal(model.identity_codes[identity], before["identity_codes"][identity])
        for name, param in model.named_parameters():
            if name != "identity_codes":
                assert torch.equal(param, before[name]), name
        others = [i for i in range(model.n_identities) if i != identity]
        assert torch.equal(model.identity_codes[others], before["identity_codes"][others])

    def test_unseen_identity_starts_from_the_mean(self, trained_run, heldout_frames):
        model = copy.deepcopy(trained_run.model)
        identity = heldout_frames[0].condition.identity
        config = load_model(trained_run.checkpoints[-1])[1]
        expected = model.mean_identity_code()

        fit_identity(model, heldout_frames, config, steps=1, lr=1e-12)

        assert torch.allclose(model.identity_codes[identity], expected, atol=1e-6)

    def test_all_parameters(self, trained_run, heldout_frames):
        model = copy.deepcopy(trained_run.model)
        config = load_model(trained_run.checkpoints[-1])[1]
        before = model.face_field.centers.clone()
        fit_identity(model, heldout_frames, config, steps=1, lr=1e-2, all_parameters=True)
        assert not torch.equal(model.face_field.centers, before)

    def test_zero_steps_is_a_no_op(self, trained_run, heldout_frames):
        model = copy.deepcopy(trained_run.model)
        config = load_model(trained_run.checkpoints[-1])[1]
        before = model.identity_codes.clone()
        assert fit_identity(model, heldout_frames, config, steps=0) is model
        assert torch.equal(model.identity_codes, before)

    def test_empty_frames(self, trained_run, tiny_train_config):
        with pytest.raises(InvalidArgumentError):
            fit_identity(trained_run.model, [], tiny_train_config, steps=1)

    def test_mixed_identities(self, trained_run, tiny_dataset, tiny_train_config):
        frames = load_frames(tiny_dataset, [tiny_dataset.select(identities=[i])[0] for i in (0, 1)])
        with pytest.raises(InvalidArgumentError):
            fit_identity(trained_run.model, frames, tiny_train_config, steps=1)
