"""
Training loop, checkpointing and test-time identity fitting.

One step samples `batch_frames` training frames, renders the face, eye and head
regions, and minimises λ_I·(six region losses) + λ_G·(oracle gaze loss) with
Adam. The learning rate decays exponentially to `lr_final_ratio` of its
initial value over the run. Per-step telemetry goes to `train_log.jsonl`;
a checkpoint is written before the first step and after every epoch.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import torch
import torch.nn as nn

from gazesplat.deform.fields import FrameCondition
from gazesplat.errors import (
    CheckpointError,
    InvalidArgumentError,
    InvalidConfigurationError,
    MissingDependencyError,
    TrainingFailureError,
)
from gazesplat.gauss.core import GaussianSet
from gazesplat.losses.gaze import GazeEstimator, gaze_loss
from gazesplat.losses.image import default_extractor, psnr, synthesis_loss
from gazesplat.losses.objective import total_loss
from gazesplat.models import FrameSplit, IdentitySplit, ManifestRecord, OracleRole, TrainConfig, config_hash
from gazesplat.storage import CheckpointStore, load_checkpoint
from gazesplat.toyscene.dataset import ToyDataset
from gazesplat.toyscene.oracle import load_oracle
from gazesplat.trainer.init import CanonicalGaussians, mean_head, sample_canonical
from gazesplat.trainer.model import GazeGaussianModel

logger = logging.getLogger(__name__)

MODEL_KIND = "gazegaussian"
TRAIN_LOG = "train_log.jsonl"
PROBE_FRAMES = 8


@dataclass
class TrainingFrame:
    """A manifest record with its decoded image, masks and condition."""

    record: ManifestRecord
    condition: FrameCondition
    image: torch.Tensor
    masks: Dict[str, torch.Tensor]


@dataclass
class TrainResult:
    model: GazeGaussianModel
    checkpoints: List[Path] = field(default_factory=list)
    loss_trace: List[float] = field(default_factory=list)
    init_psnr: float = 0.0
    final_psnr: float = 0.0


def load_frames(dataset: ToyDataset, records: Sequence[ManifestRecord]) -> List[TrainingFrame]:
    return [
        TrainingFrame(
            record=record,
            condition=dataset.condition(record),
            image=dataset.image(record),
            masks=dataset.masks(record),
        )
        for record in records
    ]


# ============================================================================
# Model Construction and Persistence
# ============================================================================

def build_model(config: TrainConfig, dataset: ToyDataset) -> GazeGaussianModel:
    """Fresh model initialised on the mean training head."""
    if config.tau_dim != dataset.config.tau_dim:
        raise InvalidConfigurationError(
            f"tau_dim {config.tau_dim} does not match the dataset's {dataset.config.tau_dim}"
        )
    train_ids = dataset.identities(IdentitySplit.TRAIN)
    neutral = mean_head([dataset.head_params(i) for i in train_ids])
    canonical = sample_canonical(
        neutral,
        n_face=config.n_face,
        n_eye=config.n_eye,
        n_landmarks=config.n_landmarks,
        feature_dim=config.feature_dim,
        seed=config.seed,
    )
    model = GazeGaussianModel(canonical, config, n_identities=len(dataset.identities()))
    model.mark_trained(train_ids)
    return model


def _placeholder_canonical(config: TrainConfig) -> CanonicalGaussians:
    """Correctly shaped zeros, overwritten by a checkpoint's state dict."""
    def zeros_set(n: int, scale_dim: int, tag: str) -> GaussianSet:
        return GaussianSet(
            centers=torch.zeros(n, 3),
            features=torch.zeros(n, config.feature_dim),
            rotations=torch.zeros(n, 4),
            scales=torch.zeros(n, scale_dim),
            opacities=torch.zeros(n, 1),
            stream_tag=tag,
        )

    return CanonicalGaussians(
        face=zeros_set(config.n_face, 3, "face"),
        eye=zeros_set(config.n_eye, 1, "eye"),
        landmarks=torch.zeros(config.n_landmarks, 3),
        eyeball_centers=torch.zeros(2, 3),
        eye_index=torch.zeros(config.n_eye, dtype=torch.int64),
    )


def save_model(
    model: GazeGaussianModel,
    config: TrainConfig,
    output_dir: Union[str, Path],
    name: str,
    epoch: int = 0,
    step: int = 0,
    extra: Optional[Dict] = None,
) -> Path:
    """Store the model as checkpoint `output_dir/name`."""
    meta = {"n_identities": model.n_identities}
    meta.update(extra or {})
    return CheckpointStore(output_dir).store_checkpoint(
        name,
        {"model": model},
        kind=MODEL_KIND,
        epoch=epoch,
        step=step,
        seed=config.seed,
        config_hash=config_hash(config),
        config=config.model_dump(mode="json"),
        extra=meta,
    )


def load_model(path: Union[str, Path]) -> Tuple[GazeGaussianModel, TrainConfig]:
    """
    Rebuild a model from a checkpoint directory.

    A directory of epoch checkpoints resolves to its latest entry.

    Raises:
        CheckpointError: missing, empty, foreign or incompatible checkpoint
    """
    path = Path(path)
    if path.is_dir() and not (path / "manifest.json").exists() and any(path.iterdir()):
        latest = CheckpointStore(path).latest_checkpoint()
        if latest is not None:
            path = latest
    manifest, components = load_checkpoint(path)
    if manifest.kind != MODEL_KIND:
        raise CheckpointError(f"Checkpoint kind '{manifest.kind}' is not a {MODEL_KIND} model")
    config = TrainConfig(**manifest.config)
    model = GazeGaussianModel(
        _placeholder_canonical(config),
        config,
        n_identities=int(manifest.extra["n_identities"]),
    )
    try:
        model.load_state_dict(components["model"])
    except (KeyError, RuntimeError) as e:
        raise CheckpointError(f"Checkpoint {path} does not match its recorded config: {e}")
    model.eval()
    logger.info(f"Loaded {MODEL_KIND} checkpoint {path} (epoch {manifest.epoch}, step {manifest.step})")
    return model, config


# ============================================================================
# Losses
# ============================================================================

def frame_loss(
    model: GazeGaussianModel,
    frame: TrainingFrame,
    config: TrainConfig,
    estimator: Optional[GazeEstimator] = None,
    extractor: Optional[nn.Module] = None,
) -> Tuple[torch.Tensor, Dict[str, float]]:
    """Total loss of one frame and its flat breakdown."""
    output = model(frame.condition)
    synthesis = synthesis_loss(
        output.images,
        output.map_rgb(),
        frame.image,
        frame.masks,
        config.loss_weights,
        extractor,
        regions=model.regions,
    )
    breakdown = synthesis.breakdown()

    gaze = None
    if config.loss_weights.gaze > 0:
        gaze = gaze_loss(output.images["head"], frame.image, estimator)
        breakdown["gaze"] = float(gaze)
    total = total_loss(synthesis.total, gaze, config.loss_weights)
    breakdown["total"] = float(total)
    return total, breakdown


def _merge_breakdowns(parts: Sequence[Dict[str, float]]) -> Dict[str, float]:
    merged: Dict[str, float] = {}
    for key in parts[0]:
        if key.startswith("skipped_"):
            continue
        merged[key] = sum(p[key] for p in parts) / len(parts)
    for part in parts:
        for key, value in part.items():
            if key.startswith("skipped_"):
                merged[key] = True
    return merged


@torch.no_grad()
def probe_psnr(model: GazeGaussianModel, frames: Sequence[TrainingFrame]) -> float:
    """Mean head PSNR over frames, clipped at 100 dB."""
    values = [min(psnr(model.render_head(f.condition), f.image), 100.0) for f in frames]
    return sum(values) / len(values)


# ============================================================================
# Optimisation
# ============================================================================

def build_optimizer(model: GazeGaussianModel, config: TrainConfig) -> torch.optim.Adam:
    """Adam with one parameter group per learning-rate multiplier key."""
    groups = []
    for key, params in model.parameter_groups().items():
        if not params:
            continue
        if key not in config.lr_multipliers:
            raise InvalidConfigurationError(f"no learning-rate multiplier for '{key}'")
        groups.append({"params": params, "lr": config.lr_init * config.lr_multipliers[key], "name": key})
    return torch.optim.Adam(groups, lr=config.lr_init, betas=config.betas)


def train(config: TrainConfig) -> TrainResult:
    """
    Train a GazeGaussian model on the training frames of training identities.

    Raises:
        MissingDependencyError: gaze weight > 0 without an oracle directory
        TrainingFailureError: non-finite loss (references the last checkpoint)
    """
    torch.manual_seed(config.seed)
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    dataset = ToyDataset(config.dataset)
    records = dataset.select([FrameSplit.TRAIN], IdentitySplit.TRAIN)
    if not records:
        raise InvalidArgumentError(f"dataset {config.dataset} has no training frames")
    frames = load_frames(dataset, records)

    estimator = None
    if config.loss_weights.gaze > 0:
        if config.oracle_dir is None:
            raise MissingDependencyError("gaze loss weight > 0 needs --oracle-dir / oracle_dir")
        estimator = load_oracle(config.oracle_dir, OracleRole.TRAINING)
    extractor = default_extractor()

    model = build_model(config, dataset)
    model.train()
    optimizer = build_optimizer(model, config)

    steps_per_epoch = math.ceil(len(frames) / config.batch_frames)
    total_steps = config.epochs * steps_per_epoch
    if config.max_steps is not None:
        total_steps = min(total_steps, config.max_steps)
    scheduler = torch.optim.lr_scheduler.ExponentialLR(
        optimizer, gamma=config.lr_final_ratio ** (1.0 / total_steps)
    )

    logger.info("=" * 60)
    logger.info(f"Training {config.ablation.name()} model")
    logger.info("=" * 60)
    logger.info(f"Dataset: {config.dataset} ({len(frames)} training frames)")
    logger.info(f"Output: {output_dir}")
    logger.info(f"Epochs: {config.epochs}, steps: {total_steps}, batch frames: {config.batch_frames}")
    logger.info(f"Gaussians: {config.n_face} face + {config.n_eye} eye")
    logger.info("=" * 60)

    probe = frames[:PROBE_FRAMES]
    result = TrainResult(model=model, init_psnr=probe_psnr(model, probe))
    logger.info(f"Initial head PSNR on probe frames: {result.init_psnr:.2f} dB")

    last_checkpoint = save_model(model, config, output_dir, "epoch_000", epoch=0, step=0)
    result.checkpoints.append(last_checkpoint)

    generator = torch.Generator().manual_seed(config.seed)
    step = 0
    with open(output_dir / TRAIN_LOG, "w") as log:
        for epoch in range(1, config.epochs + 1):
            order = torch.randperm(len(frames), generator=generator).tolist()
            for start in range(0, len(order), config.batch_frames):
                if step >= total_steps:
                    break
                batch = [frames[i] for i in order[start:start + config.batch_frames]]
                losses, parts = zip(*(frame_loss(model, f, config, estimator, extractor) for f in batch))
                loss = torch.stack(losses).mean()

                if not torch.isfinite(loss):
                    raise TrainingFailureError(
                        f"non-finite loss at step {step}",
                        achieved=float(loss),
                        last_checkpoint=str(last_checkpoint),
                    )

                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                lr = optimizer.param_groups[0]["lr"]
                scheduler.step()

                entry = {"step": step, "epoch": epoch, "lr": lr}
                entry.update(_merge_breakdowns(parts))
                log.write(json.dumps(entry) + "\n")
                result.loss_trace.append(float(loss))
                step += 1

            log.flush()
            last_checkpoint = save_model(model, config, output_dir, f"epoch_{epoch:03d}", epoch=epoch, step=step)
            result.checkpoints.append(last_checkpoint)
            logger.info(f"Epoch {epoch}/{config.epochs}: mean loss {_epoch_mean(result.loss_trace, steps_per_epoch):.5f}")
            if step >= total_steps:
                break

    model.eval()
    result.final_psnr = probe_psnr(model, probe)
    logger.info(f"Final head PSNR on probe frames: {result.final_psnr:.2f} dB")
    return result


def _epoch_mean(trace: Sequence[float], steps_per_epoch: int) -> float:
    tail = trace[-steps_per_epoch:]
    return sum(tail) / len(tail) if tail else float("nan")


# ============================================================================
# Test-Time Fitting
# ============================================================================

def fit_identity(
    model: GazeGaussianModel,
    frames: Sequence[TrainingFrame],
    config: TrainConfig,
    steps: int,
    lr: Optional[float] = None,
    all_parameters: bool = False,
    seed: int = 0,
) -> GazeGaussianModel:
    """
    Fit an identity code (optionally every parameter) to a few frames in place.

    Frames must share one identity; its code starts from the mean trained code
    unless the identity was seen in training.
    """
    if not frames:
        raise InvalidArgumentError("fit_identity needs at least one frame")
    identities = {f.condition.identity for f in frames}
    if len(identities) != 1:
        raise InvalidArgumentError(f"frames span several identities: {sorted(identities)}")
    identity = identities.pop()
    if steps <= 0:
        return model

    if not bool(model.trained_identities[identity]):
        model.reset_identity(identity)
    if all_parameters:
        params = list(model.parameters())
    elif model.identity_dim > 0:
        params = [model.identity_codes]
    else:
        logger.warning("Model has no identity codes; nothing to fit")
        return model

    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(params, lr=lr or config.lr_init, betas=config.betas)
    extractor = default_extractor()
    fit_config = config.model_copy(update={"loss_weights": config.loss_weights.model_copy(update={"gaze": 0.0})})

    model.train()
    for step in range(steps):
        frame = frames[int(torch.randint(len(frames), (1,), generator=generator))]
        loss, _ = frame_loss(model, frame, fit_config, extractor=extractor)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        logger.debug(f"identity {identity} fit step {step + 1}/{steps}: loss {float(loss):.5f}")
    model.eval()
    model.mark_trained([identity])
    return model
