"""
Image-synthesis, gaze-redirection and total losses.
"""

from gazesplat.losses.gaze import GazeEstimator, angular_error, gaze_loss
from gazesplat.losses.image import (
    FrozenFeatureExtractor,
    RegionLoss,
    SynthesisLoss,
    default_extractor,
    perceptual,
    psnr,
    region_image_loss,
    ssim,
    synthesis_loss,
)
from gazesplat.losses.objective import total_loss

__all__ = [
    "FrozenFeatureExtractor",
    "GazeEstimator",
    "RegionLoss",
    "SynthesisLoss",
    "angular_error",
    "default_extractor",
    "gaze_loss",
    "perceptual",
    "psnr",
    "region_image_loss",
    "ssim",
    "synthesis_loss",
    "total_loss",
]
