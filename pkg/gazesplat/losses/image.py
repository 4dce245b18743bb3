"""
Image-synthesis losses and image metrics.

The perceptual term is a desk-scale surrogate for VGG/LPIPS: an L1 distance
between the activations of a small convolutional extractor whose weights are
drawn once from a fixed seed and frozen. Any module returning a list of
feature tensors can be passed in its place.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Mapping, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from gazesplat.errors import InvalidArgumentError
from gazesplat.models import LossWeights

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
EXTRACTOR_SEED = 1234

REGIONS = ("face", "eye", "head")
REGION_SUFFIX = {"face": "f", "eye": "e", "head": "h"}


# ============================================================================
# Layout Helpers
# ============================================================================

def _to_nchw(image: torch.Tensor) -> torch.Tensor:
    """(H, W, C) or (B, H, W, C) → (B, C, H, W)."""
    if image.dim() == 3:
        image = image.unsqueeze(0)
    if image.dim() != 4:
        raise InvalidArgumentError(f"expected an H x W x C image, got shape {tuple(image.shape)}")
    return image.permute(0, 3, 1, 2)


def _check_pair(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise InvalidArgumentError(f"image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")


# ============================================================================
# SSIM and PSNR
# ============================================================================

def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA, dtype=torch.float64) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """
    Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), dynamic range 1.

    Windows are zero padded by 5 px so the SSIM map keeps the image size; the
    result is the map's mean over pixels, channels and batch.
    """
    _check_pair(a, b)
    x = _to_nchw(a)
    y = _to_nchw(b)
    channels = x.shape[1]
    window = gaussian_window(dtype=x.dtype).expand(channels, 1, SSIM_WINDOW, SSIM_WINDOW)
    pad = SSIM_WINDOW // 2

    def blur(t: torch.Tensor) -> torch.Tensor:
        return F.conv2d(t, window, padding=pad, groups=channels)

    mu_x = blur(x)
    mu_y = blur(y)
    sigma_x = blur(x * x) - mu_x * mu_x
    sigma_y = blur(y * y) - mu_y * mu_y
    sigma_xy = blur(x * y) - mu_x * mu_y

    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    numerator = (2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x + sigma_y + c2)
    return (numerator / denominator).mean()


def psnr(a: torch.Tensor, b: torch.Tensor, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical inputs."""
    _check_pair(a, b)
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value ** 2 / mse)


# ============================================================================
# Perceptual Surrogate
# ============================================================================

class FrozenFeatureExtractor(nn.Module):
    """Three random conv layers, seeded and frozen; returns every activation."""

    def __init__(self, seed: int = EXTRACTOR_SEED, channels: Sequence[int] = (16, 32, 32)):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        layers = []
        in_channels = 3
        for i, out_channels in enumerate(channels):
            conv = nn.Conv2d(in_channels, out_channels, 3, stride=1 if i == 0 else 2, padding=1)
            fan_in = in_channels * 9
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=generator) * math.sqrt(2.0 / fan_in))
                conv.bias.zero_()
            layers.append(conv)
            in_channels = out_channels
        self.layers = nn.ModuleList(layers)
        self.requires_grad_(False)
        self.eval()

    def forward(self, images: torch.Tensor) -> List[torch.Tensor]:
        features = []
        h = images
        for layer in self.layers:
            h = F.relu(layer(h))
            features.append(h)
        return features


@lru_cache(maxsize=None)
def default_extractor(dtype: torch.dtype = torch.float32) -> FrozenFeatureExtractor:
    return FrozenFeatureExtractor().to(dtype)


def perceptual(a: torch.Tensor, b: torch.Tensor, extractor: Optional[nn.Module] = None) -> torch.Tensor:
    """Sum over layers of the mean absolute activation difference; 0 for identical inputs."""
    _check_pair(a, b)
    extractor = extractor if extractor is not None else default_extractor(a.dtype)
    feats_a = extractor(_to_nchw(a))
    feats_b = extractor(_to_nchw(b))
    return sum((fa - fb).abs().mean() for fa, fb in zip(feats_a, feats_b))


# ============================================================================
# Region and Synthesis Losses
# ============================================================================

@dataclass
class RegionLoss:
    """One masked image loss and its three terms."""

    l1: torch.Tensor
    ssim: torch.Tensor
    perceptual: torch.Tensor
    total: torch.Tensor
    skipped: bool = False


def region_image_loss(
    image: torch.Tensor,
    target: torch.Tensor,
    mask: torch.Tensor,
    weights: Optional[LossWeights] = None,
    extractor: Optional[nn.Module] = None,
    region: str = "region",
) -> RegionLoss:
    """
    Masked L1 + λ_SSIM·(1 − SSIM) + λ_VGG·perceptual on H×W×3 images.

    The L1 term is normalised by the number of masked values (pixels × channels).
    An empty mask contributes zero and is flagged as skipped.
    """
    _check_pair(image, target)
    if mask.shape != image.shape[:-1]:
        raise InvalidArgumentError(f"mask shape {tuple(mask.shape)} does not match image {tuple(image.shape)}")
    weights = weights or LossWeights()
    zero = image.new_zeros(())

    mask = mask.to(image.dtype)
    area = mask.sum()
    if float(area) == 0.0:
        logger.warning(f"Empty {region} mask, skipping region loss")
        return RegionLoss(l1=zero, ssim=zero, perceptual=zero, total=zero, skipped=True)

    m = mask.unsqueeze(-1)
    masked_image = image * m
    masked_target = target * m
    l1 = (masked_target - masked_image).abs().sum() / (area * image.shape[-1])
    ssim_term = 1.0 - ssim(masked_image, masked_target)
    perceptual_term = perceptual(masked_image, masked_target, extractor)
    total = l1 + weights.ssim * ssim_term + weights.vgg * perceptual_term
    return RegionLoss(l1=l1, ssim=ssim_term, perceptual=perceptual_term, total=total)


@dataclass
class SynthesisLoss:
    """Sum of the image and feature-map region losses."""

    total: torch.Tensor
    terms: Dict[str, RegionLoss] = field(default_factory=dict)

    def breakdown(self) -> Dict[str, float]:
        """Flat per-term scalars for JSON-lines logging."""
        out: Dict[str, float] = {}
        for name, term in self.terms.items():
            out[f"L1_{name}"] = float(term.l1)
            out[f"ssim_{name}"] = float(term.ssim)
            out[f"vgg_{name}"] = float(term.perceptual)
            if term.skipped:
                out[f"skipped_{name}"] = True
        return out


def synthesis_loss(
    images: Mapping[str, torch.Tensor],
    maps: Mapping[str, torch.Tensor],
    target: torch.Tensor,
    masks: Mapping[str, torch.Tensor],
    weights: Optional[LossWeights] = None,
    extractor: Optional[nn.Module] = None,
    regions: Sequence[str] = REGIONS,
) -> SynthesisLoss:
    """
    Six region losses: rendered images and feature-map RGB for face, eye and head.

    `maps` holds the H×W×3 RGB channels of each region's feature map. Term keys
    are the region suffix (f, e, h) for images and m + suffix for maps.
    """
    terms: Dict[str, RegionLoss] = {}
    for region in regions:
        suffix = REGION_SUFFIX[region]
        terms[suffix] = region_image_loss(
            images[region], target, masks[region], weights, extractor, region=f"{region} image"
        )
        terms[f"m{suffix}"] = region_image_loss(
            maps[region], target, masks[region], weights, extractor, region=f"{region} map"
        )
    total = sum((term.total for term in terms.values()), target.new_zeros(()))
    return SynthesisLoss(total=total, terms=terms)
