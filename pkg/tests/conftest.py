"""
Pytest configuration and fixtures for gazesplat tests.

Integration fixtures generate one tiny dataset, two oracles and one trained
model per session; tests must treat them as read-only.
"""

import math
from pathlib import Path
from typing import Callable

import pytest
import torch

from gazesplat.gauss.core import Camera, GaussianSet
from gazesplat.models import DatasetConfig, LossWeights, OracleConfig, OracleRole, TrainConfig
from gazesplat.toyscene.dataset import ToyDataset, make_dataset
from gazesplat.toyscene.oracle import train_oracle
from gazesplat.trainer.loop import TrainResult, train


# ============================================================================
# Unit Fixtures
# ============================================================================

@pytest.fixture
def small_camera() -> Callable[..., Camera]:
    """Factory for a camera on +z looking at the origin."""
    def make(size: int = 16, focal: float = 20.0, distance: float = 3.0) -> Camera:
        return Camera.look_at(
            eye=(0.0, 0.0, distance),
            target=(0.0, 0.0, 0.0),
            fx=focal,
            fy=focal,
            height=size,
            width=size,
        )

    return make


@pytest.fixture
def random_gaussians() -> Callable[..., GaussianSet]:
    """
    Factory for random Gaussian sets around the origin.

    Centers lie in a cube of half-width `spread`, scales around 0.1 and
    opacities around sigmoid(0.8).
    """
    def make(
        n: int = 8,
        feature_dim: int = 3,
        scale_dim: int = 3,
        dtype: torch.dtype = torch.float64,
        seed: int = 0,
        spread: float = 0.5,
        stream_tag: str = "face",
    ) -> GaussianSet:
        g = torch.Generator().manual_seed(seed)
        return GaussianSet(
            centers=((torch.rand(n, 3, generator=g) * 2 - 1) * spread).to(dtype),
            features=torch.rand(n, feature_dim, generator=g).to(dtype),
            rotations=torch.randn(n, 4, generator=g).to(dtype),
            scales=(math.log(0.1) + 0.3 * torch.randn(n, scale_dim, generator=g)).to(dtype),
            opacities=(0.8 + 0.5 * torch.randn(n, 1, generator=g)).to(dtype),
            stream_tag=stream_tag,
        )

    return make


# ============================================================================
# Generated Data
# ============================================================================

@pytest.fixture(scope="session")
def tiny_dataset_config() -> DatasetConfig:
    """Three identities (one held out), five frames, two views at 24x24."""
    return DatasetConfig(
        n_identities=3,
        n_frames=5,
        n_views=2,
        resolution=24,
        focal=41.0,
        seed=7,
        heldout_frames=1,
        n_heldout_identities=1,
        gaze_grid=4,
        heldout_gaze_cell=(0, 0),
    )


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, tiny_dataset_config) -> ToyDataset:
    root = tmp_path_factory.mktemp("toy_dataset")
    make_dataset(tiny_dataset_config, root, force=True)
    return ToyDataset(root)


@pytest.fixture(scope="session")
def tiny_oracle_dir(tmp_path_factory, tiny_dataset) -> str:
    """Both oracle roles, briefly trained with a permissive error target."""
    out = tmp_path_factory.mktemp("oracles")
    for role in OracleRole:
        train_oracle(OracleConfig(
            dataset=str(tiny_dataset.root),
            output_dir=str(out),
            role=role,
            width=4,
            epochs=2,
            batch_size=8,
            target_error_deg=180.0,
        ))
    return str(out)


@pytest.fixture(scope="session")
def make_train_config(tiny_dataset) -> Callable[..., TrainConfig]:
    """Factory for small training configs; gaze loss off unless overridden."""
    def make(output_dir: Path, **overrides) -> TrainConfig:
        values = dict(
            dataset=str(tiny_dataset.root),
            output_dir=str(output_dir),
            epochs=1,
            max_steps=3,
            n_face=60,
            n_eye=20,
            n_landmarks=8,
            feature_dim=6,
            tau_dim=tiny_dataset.config.tau_dim,
            identity_dim=2,
            mlp_width=8,
            mlp_depth=1,
            renderer_width=4,
            loss_weights=LossWeights(gaze=0.0),
        )
        values.update(overrides)
        return TrainConfig(**values)

    return make


@pytest.fixture
def tiny_train_config(make_train_config, tmp_path) -> TrainConfig:
    return make_train_config(tmp_path / "run")


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory, make_train_config) -> TrainResult:
    """One short training run shared by evaluation, CLI and API tests."""
    return train(make_train_config(tmp_path_factory.mktemp("trained"), max_steps=4))
