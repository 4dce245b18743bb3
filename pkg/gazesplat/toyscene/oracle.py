"""
Oracle gaze estimator trained on the synthetic dataset.

The regressor outputs four angles in the camera-facing frame (x right, y up,
z towards the camera): gaze pitch/yaw and head-forward pitch/yaw. Two oracles
are kept per dataset: the training oracle feeds the gaze loss and the
evaluation oracle (seed + 1) scores every reported gaze error.
"""

import copy
import logging
import math
from pathlib import Path
from typing import Sequence, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from gazesplat.deform.gaze import gaze_to_vector
from gazesplat.deform.pose import HeadPose
from gazesplat.errors import CheckpointError, TrainingFailureError
from gazesplat.gauss.core import Camera
from gazesplat.losses.gaze import angular_error
from gazesplat.models import FrameSplit, IdentitySplit, ManifestRecord, OracleConfig, OracleRole, config_hash
from gazesplat.storage import CheckpointStore, load_checkpoint
from gazesplat.toyscene.dataset import ToyDataset
from gazesplat.toyscene.head import gaze_in_camera_frame, head_in_camera_frame

logger = logging.getLogger(__name__)

ORACLE_KIND = "oracle"
POOLED_SIZE = 4


class GazeOracle(nn.Module):
    """Small strided CNN regressing gaze and head angles from H×W×3 images."""

    def __init__(self, width: int = 32):
        super().__init__()
        self.width = width
        self.features = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(width, 2 * width, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(2 * width, 4 * width, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(4 * width, 4 * width, 3, padding=1),
            nn.ReLU(),
        )
        self.regressor = nn.Sequential(
            nn.Linear(4 * width * POOLED_SIZE * POOLED_SIZE, 128),
            nn.ReLU(),
            nn.Linear(128, 4),
        )

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(B, H, W, 3) images in [0, 1] → (B, 4) angles in radians."""
        x = images.permute(0, 3, 1, 2) - 0.5
        x = F.adaptive_avg_pool2d(self.features(x), POOLED_SIZE)
        return self.regressor(x.flatten(1))

    def gaze_vectors(self, images: torch.Tensor) -> torch.Tensor:
        angles = self(images)
        return gaze_to_vector(angles[:, 0], angles[:, 1])

    def head_vectors(self, images: torch.Tensor) -> torch.Tensor:
        angles = self(images)
        return gaze_to_vector(angles[:, 2], angles[:, 3])

    @torch.no_grad()
    def estimate(self, image: torch.Tensor) -> Tuple[float, float]:
        """Gaze (pitch, yaw) of one H×W×3 image, camera-facing frame."""
        was_training = self.training
        self.eval()
        angles = self(image.unsqueeze(0))[0]
        self.train(was_training)
        return float(angles[0]), float(angles[1])


def estimate(oracle: GazeOracle, image: torch.Tensor) -> Tuple[float, float]:
    return oracle.estimate(image)


# ============================================================================
# Labels and Batches
# ============================================================================

def record_targets(record: ManifestRecord) -> torch.Tensor:
    """Camera-facing (gaze pitch, gaze yaw, head pitch, head yaw) of a record."""
    pose = HeadPose.from_record(record.pose)
    camera = Camera.from_record(record.camera)
    gaze = gaze_in_camera_frame(record.pitch, record.yaw, pose, camera)
    head = head_in_camera_frame(pose, camera)
    return torch.tensor([gaze[0], gaze[1], head[0], head[1]], dtype=torch.float32)


def load_batch(dataset: ToyDataset, records: Sequence[ManifestRecord]) -> Tuple[torch.Tensor, torch.Tensor]:
    images = torch.stack([dataset.image(r) for r in records])
    targets = torch.stack([record_targets(r) for r in records])
    return images, targets


@torch.no_grad()
def mean_gaze_error_deg(oracle: GazeOracle, images: torch.Tensor, targets: torch.Tensor) -> float:
    """Mean angular gaze error in degrees over a batch."""
    oracle.eval()
    predicted = oracle.gaze_vectors(images)
    expected = gaze_to_vector(targets[:, 0], targets[:, 1])
    return math.degrees(float(angular_error(predicted, expected).mean()))


# ============================================================================
# Training
# ============================================================================

def fit_oracle(
    oracle: GazeOracle,
    images: torch.Tensor,
    targets: torch.Tensor,
    epochs: int,
    batch_size: int,
    lr: float,
    seed: int,
) -> GazeOracle:
    """Minimise the L1 angle error with Adam over shuffled mini-batches."""
    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(oracle.parameters(), lr=lr)
    oracle.train()
    n = images.shape[0]
    for epoch in range(epochs):
        order = torch.randperm(n, generator=generator)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss = (oracle(images[idx]) - targets[idx]).abs().mean()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss) * idx.numel()
        logger.debug(f"oracle epoch {epoch + 1}/{epochs}: loss {epoch_loss / n:.5f}")
    oracle.eval()
    return oracle


def oracle_path(oracle_dir: Union[str, Path], role: OracleRole) -> Path:
    return Path(oracle_dir) / role.value


def train_oracle(config: OracleConfig) -> GazeOracle:
    """
    Train and store one oracle for `config.role`.

    Trains on training frames of training identities and validates on their
    held-out frames. The evaluation role uses seed + 1.

    Raises:
        TrainingFailureError: validation gaze error above target_error_deg
    """
    seed = config.seed + (1 if config.role == OracleRole.EVALUATION else 0)
    torch.manual_seed(seed)

    dataset = ToyDataset(config.dataset)
    train_records = dataset.select([FrameSplit.TRAIN], IdentitySplit.TRAIN)
    val_records = dataset.select([FrameSplit.HELDOUT_FRAME], IdentitySplit.TRAIN)
    if not val_records:
        val_records = train_records
    logger.info(
        f"Training {config.role.value} oracle on {len(train_records)} images, "
        f"validating on {len(val_records)}"
    )

    images, targets = load_batch(dataset, train_records)
    oracle = GazeOracle(width=config.width)
    fit_oracle(oracle, images, targets, config.epochs, config.batch_size, config.lr, seed)

    val_images, val_targets = load_batch(dataset, val_records)
    achieved = mean_gaze_error_deg(oracle, val_images, val_targets)

    path = CheckpointStore(config.output_dir).store_checkpoint(
        config.role.value,
        {"oracle": oracle},
        kind=ORACLE_KIND,
        epoch=config.epochs,
        seed=seed,
        config_hash=config_hash(config),
        config=config.model_dump(mode="json"),
        extra={"width": config.width, "validation_error_deg": achieved, "role": config.role.value},
    )
    logger.info(f"{config.role.value} oracle validation gaze error: {achieved:.3f} deg")
    if achieved > config.target_error_deg:
        raise TrainingFailureError(
            f"oracle missed the {config.target_error_deg} deg target",
            achieved=achieved,
            last_checkpoint=str(path),
        )
    return oracle


def load_oracle(oracle_dir: Union[str, Path], role: OracleRole = OracleRole.TRAINING) -> GazeOracle:
    """Load a frozen oracle from `oracle_dir/<role>`."""
    manifest, components = load_checkpoint(oracle_path(oracle_dir, role))
    if manifest.kind != ORACLE_KIND:
        raise CheckpointError(f"Checkpoint kind '{manifest.kind}' is not an oracle")
    oracle = GazeOracle(width=int(manifest.extra["width"]))
    oracle.load_state_dict(components["oracle"])
    oracle.requires_grad_(False)
    oracle.eval()
    return oracle


def oracle_validation_error(oracle_dir: Union[str, Path], role: OracleRole) -> float:
    manifest, _ = load_checkpoint(oracle_path(oracle_dir, role))
    return float(manifest.extra["validation_error_deg"])


def finetune_oracle(
    oracle: GazeOracle,
    images: torch.Tensor,
    targets: torch.Tensor,
    steps: int,
    lr: float,
    seed: int,
    batch_size: int = 32,
) -> GazeOracle:
    """Fine-tune a fresh copy of an oracle for a fixed number of steps."""
    tuned = copy.deepcopy(oracle)
    tuned.requires_grad_(True)
    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(tuned.parameters(), lr=lr)
    tuned.train()
    n = images.shape[0]
    for _ in range(steps):
        idx = torch.randint(0, n, (min(batch_size, n),), generator=generator)
        loss = (tuned(images[idx]) - targets[idx]).abs().mean()
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    tuned.requires_grad_(False)
    tuned.eval()
    return tuned
