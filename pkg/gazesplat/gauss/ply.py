"""
Binary little-endian PLY persistence for Gaussian sets.

Vertex properties: x, y, z, f_0..f_{F-1}, rot_0..rot_3, scale_0..scale_{k-1},
opacity. The stream tag is stored as the header comment "stream=<tag>".
"""

import logging
import re
from pathlib import Path
from typing import List, Union

import numpy as np
import torch
from plyfile import PlyData, PlyElement

from gazesplat.errors import PlyFormatError
from gazesplat.gauss.core import GaussianSet
from gazesplat.models import StreamTag

logger = logging.getLogger(__name__)

STREAM_COMMENT = re.compile(r"^stream=(\w+)$")


def _attribute_names(feature_dim: int, scale_dim: int) -> List[str]:
    names = ["x", "y", "z"]
    names += [f"f_{i}" for i in range(feature_dim)]
    names += [f"rot_{i}" for i in range(4)]
    names += [f"scale_{i}" for i in range(scale_dim)]
    names.append("opacity")
    return names


def save_ply(gaussians: GaussianSet, path: Union[str, Path]) -> None:
    """Write a Gaussian set as binary little-endian PLY (float32 attributes)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    names = _attribute_names(gaussians.feature_dim, gaussians.scales.shape[1])
    columns = torch.cat(
        [
            gaussians.centers,
            gaussians.features,
            gaussians.rotations,
            gaussians.scales,
            gaussians.opacities,
        ],
        dim=1,
    ).detach().cpu().to(torch.float32).numpy()

    elements = np.empty(gaussians.n, dtype=[(name, "<f4") for name in names])
    for i, name in enumerate(names):
        elements[name] = columns[:, i]

    vertex = PlyElement.describe(elements, "vertex")
    PlyData(
        [vertex],
        text=False,
        byte_order="<",
        comments=[f"stream={gaussians.stream_tag.value}"],
    ).write(str(path))
    logger.debug(f"Saved {gaussians.n} {gaussians.stream_tag.value} Gaussians to {path}")


def load_ply(path: Union[str, Path]) -> GaussianSet:
    """
    Read a Gaussian set written by save_ply.

    Raises:
        PlyFormatError: malformed header, missing or surplus attributes, or an
            unknown stream tag; the offending field is named in the error
    """
    path = Path(path)
    try:
        ply = PlyData.read(str(path))
    except Exception as e:
        raise PlyFormatError(f"Cannot parse PLY header of {path}: {e}", field="header")

    tags = [m.group(1) for m in (STREAM_COMMENT.match(c.strip()) for c in ply.comments) if m]
    if not tags:
        raise PlyFormatError(f"{path} has no stream comment", field="stream")
    try:
        stream_tag = StreamTag(tags[0])
    except ValueError:
        raise PlyFormatError(f"Unknown stream tag '{tags[0]}' in {path}", field="stream")

    try:
        vertex = ply["vertex"]
    except KeyError:
        raise PlyFormatError(f"{path} has no vertex element", field="vertex")

    present = [prop.name for prop in vertex.properties]
    feature_dim = sum(1 for name in present if re.fullmatch(r"f_\d+", name))
    scale_dim = sum(1 for name in present if re.fullmatch(r"scale_\d+", name))
    if scale_dim not in (1, 3):
        raise PlyFormatError(f"{path} has {scale_dim} scale columns", field="scale_0")

    expected = _attribute_names(feature_dim, scale_dim)
    for name in expected:
        if name not in present:
            raise PlyFormatError(f"{path} is missing attribute '{name}'", field=name)
    for name in present:
        if name not in expected:
            raise PlyFormatError(f"{path} has unexpected attribute '{name}'", field=name)

    data = vertex.data
    columns = np.stack([np.asarray(data[name], dtype=np.float32) for name in expected], axis=1)
    columns = torch.from_numpy(columns.reshape(len(data), len(expected)))

    splits = [3, feature_dim, 4, scale_dim, 1]
    centers, features, rotations, scales, opacities = torch.split(columns, splits, dim=1)
    return GaussianSet(
        centers=centers.contiguous(),
        features=features.contiguous(),
        rotations=rotations.contiguous(),
        scales=scales.contiguous(),
        opacities=opacities.contiguous(),
        stream_tag=stream_tag,
    )
