"""
Procedural synthetic heads, the dataset built from them and the oracle gaze
estimator trained on it.
"""

from gazesplat.toyscene.dataset import ToyDataset, make_dataset
from gazesplat.toyscene.head import (
    MASK_BACKGROUND,
    MASK_EYE,
    MASK_FACE,
    ToyHeadParams,
    ToySample,
    gaze_in_camera_frame,
    head_in_camera_frame,
    render_gt,
)
from gazesplat.toyscene.oracle import GazeOracle, estimate, finetune_oracle, load_oracle, train_oracle

__all__ = [
    "GazeOracle",
    "MASK_BACKGROUND",
    "MASK_EYE",
    "MASK_FACE",
    "ToyDataset",
    "ToyHeadParams",
    "ToySample",
    "estimate",
    "finetune_oracle",
    "gaze_in_camera_frame",
    "head_in_camera_frame",
    "load_oracle",
    "make_dataset",
    "render_gt",
    "train_oracle",
]
