"""
Canonical initialisation, the GazeGaussian model and its training loop.
"""

from gazesplat.trainer.init import CanonicalGaussians, init_canonical, mean_head, sample_canonical
from gazesplat.trainer.loop import (
    TrainingFrame,
    TrainResult,
    build_model,
    fit_identity,
    frame_loss,
    load_frames,
    load_model,
    save_model,
    train,
)
from gazesplat.trainer.model import GazeGaussianModel, ModelOutput

__all__ = [
    "CanonicalGaussians",
    "GazeGaussianModel",
    "ModelOutput",
    "TrainResult",
    "TrainingFrame",
    "build_model",
    "fit_identity",
    "frame_loss",
    "init_canonical",
    "load_frames",
    "load_model",
    "mean_head",
    "sample_canonical",
    "save_model",
    "train",
]
