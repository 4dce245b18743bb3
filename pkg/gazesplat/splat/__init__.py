"""
Differentiable splatting of Gaussian sets into feature maps.
"""

from gazesplat.splat.featuremap import (
    FeatureMap,
    encode_png,
    export_rgb_png,
    load_feature_map,
    png_to_tensor,
    save_feature_map,
    tensor_to_png,
)
from gazesplat.splat.rasterizer import (
    ALPHA_MAX,
    BLUR_FLOOR,
    NEAR_PLANE,
    ProjectedSplats,
    composite,
    concat_streams,
    project,
    rasterize,
)

__all__ = [
    "ALPHA_MAX",
    "BLUR_FLOOR",
    "FeatureMap",
    "NEAR_PLANE",
    "ProjectedSplats",
    "composite",
    "concat_streams",
    "encode_png",
    "export_rgb_png",
    "load_feature_map",
    "png_to_tensor",
    "project",
    "rasterize",
    "save_feature_map",
    "tensor_to_png",
]
