"""
Rasterized feature maps and their on-disk container.

A map is stored as a JSON sidecar (shape, region tag, dtype) plus a raw
little-endian float32 plane; RGB channels can also be exported as PNG.
"""

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch
from PIL import Image

from gazesplat.errors import InvalidArgumentError
from gazesplat.models import StreamTag


@dataclass
class FeatureMap:
    """H×W×C rasterized features; channels 0–2 are RGB."""

    data: torch.Tensor
    alpha: torch.Tensor
    region_tag: StreamTag

    def __post_init__(self):
        self.region_tag = StreamTag(self.region_tag)
        if self.data.dim() != 3:
            raise InvalidArgumentError("feature map data must be H x W x C")
        if self.alpha.shape != self.data.shape[:2]:
            raise InvalidArgumentError("alpha plane must match the map's H x W")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def rgb(self) -> torch.Tensor:
        return self.data[..., :3]

    def to_chw(self) -> torch.Tensor:
        """Channel-first view for convolutional consumers."""
        return self.data.permute(2, 0, 1)


def save_feature_map(feature_map: FeatureMap, path: Union[str, Path]) -> Path:
    """Write `<path>.json` and `<path>.f32`; returns the sidecar path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sidecar = path.with_suffix(".json")
    plane = path.with_suffix(".f32")

    stacked = torch.cat([feature_map.data, feature_map.alpha.unsqueeze(-1)], dim=-1)
    stacked.detach().cpu().to(torch.float32).numpy().astype("<f4").tofile(plane)
    sidecar.write_text(json.dumps({
        "shape": [feature_map.height, feature_map.width, feature_map.channels],
        "region_tag": feature_map.region_tag.value,
        "dtype": "<f4",
        "alpha_channel": True,
        "plane": plane.name,
    }, indent=2))
    return sidecar


def load_feature_map(path: Union[str, Path]) -> FeatureMap:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    height, width, channels = meta["shape"]
    raw = np.fromfile(path.with_suffix(".f32"), dtype="<f4")
    expected = height * width * (channels + 1)
    if raw.size != expected:
        raise InvalidArgumentError(
            f"feature map plane has {raw.size} values, expected {expected}"
        )
    stacked = torch.from_numpy(raw.reshape(height, width, channels + 1).astype(np.float32))
    return FeatureMap(
        data=stacked[..., :channels].contiguous(),
        alpha=stacked[..., channels].contiguous(),
        region_tag=meta["region_tag"],
    )


def _to_pil(image: torch.Tensor) -> Image.Image:
    array = image.detach().cpu().clamp(0.0, 1.0).numpy()
    return Image.fromarray(np.round(array * 255.0).astype(np.uint8))


def tensor_to_png(image: torch.Tensor, path: Union[str, Path]) -> Path:
    """Write an H×W×3 tensor in [0,1] as an 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _to_pil(image).save(path)
    return path


def encode_png(image: torch.Tensor) -> bytes:
    buffer = io.BytesIO()
    _to_pil(image).save(buffer, format="PNG")
    return buffer.getvalue()


def export_rgb_png(feature_map: FeatureMap, path: Union[str, Path]) -> Path:
    return tensor_to_png(feature_map.rgb(), path)


def png_to_tensor(path: Union[str, Path], dtype: Optional[torch.dtype] = None) -> torch.Tensor:
    """Read an 8-bit RGB PNG as an H×W×3 tensor in [0,1]."""
    with Image.open(path) as img:
        array = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    tensor = torch.from_numpy(array.copy())
    return tensor if dtype is None else tensor.to(dtype)
