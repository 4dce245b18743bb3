"""
Tests for the feature map container and its PNG export.
"""

import pytest
import torch

from gazesplat.errors import InvalidArgumentError
from gazesplat.models import StreamTag
from gazesplat.splat.featuremap import (
    FeatureMap,
    encode_png,
    export_rgb_png,
    load_feature_map,
    png_to_tensor,
    save_feature_map,
)

pytestmark = pytest.mark.unit


@pytest.fixture
def feature_map() -> FeatureMap:
    g = torch.Generator().manual_seed(0)
    return FeatureMap(
        data=torch.rand(6, 5, 4, generator=g),
        alpha=torch.rand(6, 5, generator=g),
        region_tag="face",
    )


class TestFeatureMap:
    """Shape checks and accessors."""

    def test_accessors(self, feature_map):
        assert (feature_map.height, feature_map.width, feature_map.channels) == (6, 5, 4)
        assert feature_map.rgb().shape == (6, 5, 3)
        assert feature_map.to_chw().shape == (4, 6, 5)
        assert feature_map.region_tag == StreamTag.FACE

    def test_alpha_shape_mismatch_raises(self):
        with pytest.raises(InvalidArgumentError):
            FeatureMap(data=torch.zeros(4, 4, 3), alpha=torch.zeros(4, 3), region_tag="head")

    def test_flat_data_raises(self):
        with pytest.raises(InvalidArgumentError):
            FeatureMap(data=torch.zeros(4, 3), alpha=torch.zeros(4, 3), region_tag="head")


class TestPersistence:
    """Sidecar plus raw float plane."""

    def test_save_and_load(self, tmp_path, feature_map):
        sidecar = save_feature_map(feature_map, tmp_path / "maps" / "frame")
        assert sidecar.suffix == ".json"

        loaded = load_feature_map(tmp_path / "maps" / "frame")
        assert torch.equal(loaded.data, feature_map.data)
        assert torch.equal(loaded.alpha, feature_map.alpha)
        assert loaded.region_tag == StreamTag.FACE

    def test_truncated_plane_raises(self, tmp_path, feature_map):
        save_feature_map(feature_map, tmp_path / "frame")
        plane = tmp_path / "frame.f32"
        plane.write_bytes(plane.read_bytes()[:-8])

        with pytest.raises(InvalidArgumentError):
            load_feature_map(tmp_path / "frame")


class TestPng:
    """8-bit RGB export."""

    def test_encode_png_signature(self, feature_map):
        assert encode_png(feature_map.rgb()).startswith(b"\x89PNG\r\n\x1a\n")

    def test_export_and_read_back(self, tmp_path, feature_map):
        path = export_rgb_png(feature_map, tmp_path / "frame.png")
        image = png_to_tensor(path)
        assert image.shape == (6, 5, 3)
        assert (image - feature_map.rgb()).abs().max() <= 0.5 / 255.0 + 1e-6

    def test_out_of_range_values_are_clamped(self, tmp_path):
        image = torch.tensor([[[-1.0, 0.5, 2.0]]])
        path = export_rgb_png(FeatureMap(image, torch.ones(1, 1), "head"), tmp_path / "x.png")
        read = png_to_tensor(path, dtype=torch.float64)
        assert read.dtype == torch.float64
        assert read[0, 0, 0] == 0.0
        assert read[0, 0, 2] == 1.0
