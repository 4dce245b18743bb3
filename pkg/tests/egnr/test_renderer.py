"""
Tests for expression cross-attention and the neural renderer.
"""

import math

import pytest
import torch
import torch.nn as nn
from torch.func import functional_call

from gazesplat.egnr.renderer import (
    ExpressionAttention,
    ExpressionGuidedRenderer,
    expression_attend,
    render,
)
from gazesplat.errors import InvalidConfigurationError
from gazesplat.splat.featuremap import FeatureMap

pytestmark = pytest.mark.unit

F64 = torch.float64


def random_value(attention: ExpressionAttention, seed: int = 0) -> None:
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        attention.value.weight.copy_(0.3 * torch.randn(attention.value.weight.shape, generator=g, dtype=attention.value.weight.dtype))
        attention.value.bias.copy_(0.3 * torch.randn(attention.value.bias.shape, generator=g, dtype=attention.value.bias.dtype))


class TestExpressionAttention:
    """Single-query cross-attention on bottleneck tokens."""

    def test_zero_value_projection_is_identity(self):
        attention = ExpressionAttention(condition_dim=4, channels=6).double()
        tokens = torch.randn(10, 6, dtype=F64)
        out = expression_attend(attention, tokens, torch.randn(4, dtype=F64))
        assert torch.equal(out, tokens)

    def test_single_token_takes_full_weight(self):
        attention = ExpressionAttention(condition_dim=3, channels=5).double()
        random_value(attention)
        tokens = torch.randn(1, 5, dtype=F64)
        out = expression_attend(attention, tokens, torch.randn(3, dtype=F64))
        expected = tokens + tokens * attention.value(tokens)
        assert torch.allclose(out, expected, atol=1e-12)

    def test_matches_manual_softmax(self):
        attention = ExpressionAttention(condition_dim=3, channels=4).double()
        random_value(attention, seed=1)
        tokens = torch.randn(7, 4, dtype=F64)
        tau = torch.randn(3, dtype=F64)

        q = attention.query(tau)
        k = attention.key(tokens)
        v = attention.value(tokens)
        scores = (k @ q) / math.sqrt(4)
        weights = torch.exp(scores) / torch.exp(scores).sum()
        attended = weights @ v
        expected = tokens + tokens * attended

        out = expression_attend(attention, tokens, tau)
        assert torch.allclose(out, expected, atol=1e-12)

    def test_gradient_wrt_condition(self):
        attention = ExpressionAttention(condition_dim=3, channels=4).double()
        random_value(attention, seed=2)
        tokens = torch.randn(5, 4, dtype=F64)
        tau = torch.randn(3, dtype=F64, requires_grad=True)
        assert torch.autograd.gradcheck(lambda t: expression_attend(attention, tokens, t), (tau,))

    def test_token_width_mismatch_raises(self):
        attention = ExpressionAttention(condition_dim=3, channels=4)
        with pytest.raises(InvalidConfigurationError):
            expression_attend(attention, torch.zeros(2, 5), torch.zeros(3))

    def test_condition_width_mismatch_raises(self):
        attention = ExpressionAttention(condition_dim=3, channels=4)
        with pytest.raises(InvalidConfigurationError):
            expression_attend(attention, torch.zeros(2, 4), torch.zeros(2))


class TestExpressionGuidedRenderer:
    """UNet decoder with an attention bottleneck."""

    def test_untrained_renderer_outputs_half(self):
        renderer = ExpressionGuidedRenderer(in_channels=6, condition_dim=4, base_width=4)
        image = renderer.render(torch.rand(16, 16, 6), torch.randn(4))
        assert image.shape == (16, 16, 3)
        assert torch.equal(image, torch.full_like(image, 0.5))

    @pytest.mark.parametrize("height,width", [(7, 9), (13, 5), (24, 24)])
    def test_odd_shapes_keep_resolution(self, height, width):
        renderer = ExpressionGuidedRenderer(in_channels=4, condition_dim=2, base_width=4)
        image = renderer.render(torch.rand(height, width, 4), torch.zeros(2))
        assert image.shape == (height, width, 3)

    def test_accepts_feature_maps(self):
        renderer = ExpressionGuidedRenderer(in_channels=3, condition_dim=2, base_width=4)
        feature_map = FeatureMap(torch.rand(8, 8, 3), torch.ones(8, 8), "head")
        assert render(renderer, feature_map, torch.zeros(2)).shape == (8, 8, 3)

    def test_condition_ignored_while_value_is_zero(self):
        torch.manual_seed(0)
        renderer = ExpressionGuidedRenderer(in_channels=3, condition_dim=2, base_width=4)
        with torch.no_grad():
            nn.init.normal_(renderer.head.weight, std=0.5)
        features = torch.rand(12, 12, 3)
        a = renderer.render(features, torch.tensor([1.0, -1.0]))
        b = renderer.render(features, torch.tensor([-3.0, 2.0]))
        assert torch.equal(a, b)
        assert not torch.allclose(a, torch.full_like(a, 0.5))

    def test_condition_matters_once_value_is_trained(self):
        torch.manual_seed(1)
        renderer = ExpressionGuidedRenderer(in_channels=3, condition_dim=2, base_width=4)
        with torch.no_grad():
            nn.init.normal_(renderer.head.weight, std=0.5)
            nn.init.normal_(renderer.attention.value.weight, std=0.5)
            nn.init.normal_(renderer.attention.query.weight, std=2.0)
        features = torch.rand(12, 12, 3)
        a = renderer.render(features, torch.tensor([1.0, -1.0]))
        b = renderer.render(features, torch.tensor([-3.0, 2.0]))
        assert not torch.allclose(a, b)

    def test_without_attention_ignores_condition(self):
        torch.manual_seed(2)
        renderer = ExpressionGuidedRenderer(in_channels=3, condition_dim=2, base_width=4, use_attention=False)
        with torch.no_grad():
            nn.init.normal_(renderer.head.weight, std=0.5)
            nn.init.normal_(renderer.attention.value.weight, std=0.5)
        features = torch.rand(8, 8, 3)
        assert torch.equal(
            renderer.render(features, torch.tensor([1.0, 0.0])),
            renderer.render(features, torch.tensor([0.0, 5.0])),
        )

    def test_output_in_unit_range(self):
        torch.manual_seed(3)
        renderer = ExpressionGuidedRenderer(in_channels=3, condition_dim=2, base_width=4)
        with torch.no_grad():
            nn.init.normal_(renderer.head.weight, std=5.0)
        image = renderer.render(torch.rand(8, 8, 3), torch.zeros(2))
        assert float(image.min()) >= 0.0
        assert float(image.max()) <= 1.0

    @pytest.mark.parametrize("use_attention", [True, False])
    def test_gradients_wrt_every_weight(self, use_attention):
        torch.manual_seed(4)
        renderer = ExpressionGuidedRenderer(
            in_channels=3, condition_dim=2, base_width=2, use_attention=use_attention,
        ).double()
        with torch.no_grad():
            nn.init.normal_(renderer.head.weight, std=0.5)
            nn.init.normal_(renderer.attention.value.weight, std=0.5)
            nn.init.normal_(renderer.attention.query.weight, std=1.0)
        used = [
            (name, p) for name, p in renderer.named_parameters()
            if use_attention or not name.startswith("attention.")
        ]
        names = [name for name, _ in used]
        weights = tuple(p.detach().clone().requires_grad_(True) for _, p in used)
        g = torch.Generator().manual_seed(5)
        features = torch.rand(16, 16, 3, generator=g, dtype=F64)
        tau = torch.tensor([0.7, -0.4], dtype=F64)
        readout = torch.randn(16 * 16 * 3, 4, generator=g, dtype=F64)

        def decoded(*params):
            image = functional_call(renderer, dict(zip(names, params)), (features.permute(2, 0, 1)[None], tau[None]))
            return image.reshape(-1) @ readout

        assert torch.autograd.gradcheck(decoded, weights, eps=1e-6, atol=1e-5)

    def test_channel_mismatch_raises(self):
        renderer = ExpressionGuidedRenderer(in_channels=6, condition_dim=2, base_width=4)
        with pytest.raises(InvalidConfigurationError):
            renderer.render(torch.rand(8, 8, 5), torch.zeros(2))
