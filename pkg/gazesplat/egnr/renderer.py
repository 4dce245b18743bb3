"""
Expression-guided neural renderer.

A small UNet decodes splatted feature maps into RGB. Its H/4 bottleneck is
modulated by single-head cross-attention whose one query token comes from the
condition code:

    a    = softmax(q(τ) k(z_b)ᵀ / √Cb) v(z_b)
    z'_b = z_b + z_b ⊙ a

The value projection and the RGB head start at zero, so an untrained renderer
ignores τ and outputs 0.5 everywhere.
"""

import logging
import math
from typing import Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from gazesplat.errors import InvalidConfigurationError
from gazesplat.splat.featuremap import FeatureMap

logger = logging.getLogger(__name__)

NEGATIVE_SLOPE = 0.2


class ExpressionAttention(nn.Module):
    """Cross-attention from one condition token onto bottleneck tokens."""

    def __init__(self, condition_dim: int, channels: int):
        super().__init__()
        self.condition_dim = condition_dim
        self.channels = channels
        self.query = nn.Linear(condition_dim, channels)
        self.key = nn.Linear(channels, channels)
        self.value = nn.Linear(channels, channels)
        nn.init.zeros_(self.value.weight)
        nn.init.zeros_(self.value.bias)

    def forward(self, tokens: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        """
        Args:
            tokens: (B, T, Cb) bottleneck tokens
            condition: (B, D) condition codes

        Returns:
            (B, T, Cb) modulated tokens
        """
        if tokens.shape[-1] != self.channels:
            raise InvalidConfigurationError(
                f"attention expects {self.channels}-wide tokens, got {tokens.shape[-1]}"
            )
        if condition.shape[-1] != self.condition_dim:
            raise InvalidConfigurationError(
                f"attention expects a {self.condition_dim}-d condition, got {condition.shape[-1]}"
            )
        q = self.query(condition).unsqueeze(1)
        k = self.key(tokens)
        v = self.value(tokens)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.channels)
        attended = torch.softmax(scores, dim=-1) @ v
        return tokens + tokens * attended


def expression_attend(attention: ExpressionAttention, tokens: torch.Tensor, tau: torch.Tensor) -> torch.Tensor:
    """Unbatched form: tokens (T, Cb), tau (D,) → (T, Cb)."""
    return attention(tokens.unsqueeze(0), tau.unsqueeze(0)).squeeze(0)


def _conv_block(in_channels: int, out_channels: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1),
        nn.LeakyReLU(NEGATIVE_SLOPE),
        nn.Conv2d(out_channels, out_channels, 3, padding=1),
        nn.LeakyReLU(NEGATIVE_SLOPE),
    )


class ExpressionGuidedRenderer(nn.Module):
    """UNet with two downsampling stages and an attention-modulated bottleneck."""

    def __init__(
        self,
        in_channels: int,
        condition_dim: int,
        base_width: int = 32,
        use_attention: bool = True,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.condition_dim = condition_dim
        self.use_attention = use_attention

        w = base_width
        self.enc0 = _conv_block(in_channels, w)
        self.enc1 = _conv_block(w, 2 * w, stride=2)
        self.enc2 = _conv_block(2 * w, 4 * w, stride=2)
        self.attention = ExpressionAttention(condition_dim, 4 * w)
        self.dec1 = _conv_block(4 * w + 2 * w, 2 * w)
        self.dec0 = _conv_block(2 * w + w, w)
        self.head = nn.Conv2d(w, 3, 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, features: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        """(B, C, H, W) feature maps and (B, D) codes → (B, 3, H, W) in [0, 1]."""
        if features.shape[1] != self.in_channels:
            raise InvalidConfigurationError(
                f"renderer expects {self.in_channels} channels, got {features.shape[1]}"
            )
        skip0 = self.enc0(features)
        skip1 = self.enc1(skip0)
        bottleneck = self.enc2(skip1)

        if self.use_attention:
            b, c, h, w = bottleneck.shape
            tokens = bottleneck.flatten(2).transpose(1, 2)
            tokens = self.attention(tokens, condition.to(tokens.dtype))
            bottleneck = tokens.transpose(1, 2).reshape(b, c, h, w)

        up1 = F.interpolate(bottleneck, size=skip1.shape[-2:], mode="bilinear", align_corners=False)
        x = self.dec1(torch.cat([up1, skip1], dim=1))
        up0 = F.interpolate(x, size=skip0.shape[-2:], mode="bilinear", align_corners=False)
        x = self.dec0(torch.cat([up0, skip0], dim=1))
        return torch.sigmoid(self.head(x))

    def render(self, feature_map: Union[FeatureMap, torch.Tensor], tau: torch.Tensor) -> torch.Tensor:
        """Decode one H×W×C map into an H×W×3 image."""
        data = feature_map.data if isinstance(feature_map, FeatureMap) else feature_map
        if data.dim() != 3 or data.shape[-1] != self.in_channels:
            raise InvalidConfigurationError(
                f"renderer expects an H x W x {self.in_channels} map, got {tuple(data.shape)}"
            )
        image = self(data.permute(2, 0, 1).unsqueeze(0), tau.unsqueeze(0))
        return image.squeeze(0).permute(1, 2, 0)


def render(renderer: ExpressionGuidedRenderer, feature_map: Union[FeatureMap, torch.Tensor], tau: torch.Tensor) -> torch.Tensor:
    return renderer.render(feature_map, tau)
