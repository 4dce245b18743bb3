"""
Differentiable Gaussian rasterizer.

World-space Gaussians are projected with the local affine (EWA) approximation,
sorted front to back and alpha-composited per pixel:

    C(p) = Σ_i c_i α_i Π_{j<i} (1 − α_j),   α_i = clamp(o_i · g_i(p), 0, 0.999)

Compositing is exact per pixel. The optional tile path evaluates the same sum
over k×k pixel blocks and skips splats whose footprint cannot reach a block;
the skipped contributions are below 1e-8 per splat.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import torch

from gazesplat.errors import ContractViolationError, InvalidArgumentError
from gazesplat.gauss.core import Camera, GaussianSet
from gazesplat.models import StreamTag
from gazesplat.splat.featuremap import FeatureMap

logger = logging.getLogger(__name__)

NEAR_PLANE = 0.01
BLUR_FLOOR = 0.3
ALPHA_MAX = 0.999

# Mahalanobis radius beyond which the 2D density drops below 1e-8.
FOOTPRINT_SIGMAS = math.sqrt(2.0 * math.log(1e8))


# ============================================================================
# Projection
# ============================================================================

@dataclass
class ProjectedSplats:
    """Batch of screen-space splats, one row per visible Gaussian."""

    means2d: torch.Tensor      # (N, 2) pixels
    cov2d: torch.Tensor        # (N, 2, 2) pixels²
    depths: torch.Tensor       # (N,) camera-space z
    features: torch.Tensor     # (N, C)
    opacities: torch.Tensor    # (N,) activated
    indices: torch.Tensor      # (N,) row in the source set

    def __len__(self) -> int:
        return self.depths.shape[0]

    def take(self, order: torch.Tensor) -> "ProjectedSplats":
        return ProjectedSplats(
            means2d=self.means2d[order],
            cov2d=self.cov2d[order],
            depths=self.depths[order],
            features=self.features[order],
            opacities=self.opacities[order],
            indices=self.indices[order],
        )

    def sorted(self) -> "ProjectedSplats":
        """Ascending depth, ties broken by source index."""
        by_index = torch.argsort(self.indices)
        ordered = self.take(by_index)
        by_depth = torch.sort(ordered.depths.detach(), stable=True).indices
        return ordered.take(by_depth)


def project(gaussians: GaussianSet, camera: Camera) -> ProjectedSplats:
    """
    Project world-space Gaussians into pixel space.

    Splats with camera-space depth ≤ 0.01 are culled. The 2D covariance is
    J W Σ Wᵀ Jᵀ + 0.3·I with J the perspective Jacobian at the splat center.
    """
    dtype = gaussians.dtype
    rot = camera.rotation(dtype)
    trans = camera.translation(dtype)

    cam_points = gaussians.centers @ rot.T + trans
    visible = torch.nonzero(cam_points[:, 2].detach() > NEAR_PLANE).squeeze(1)

    points = cam_points[visible]
    x, y, z = points.unbind(-1)
    cov3d = gaussians.covariances()[visible]
    cov_cam = rot @ cov3d @ rot.T

    zero = torch.zeros_like(z)
    jac = torch.stack([
        torch.stack([camera.fx / z, zero, -camera.fx * x / (z * z)], dim=-1),
        torch.stack([zero, camera.fy / z, -camera.fy * y / (z * z)], dim=-1),
    ], dim=-2)
    blur = BLUR_FLOOR * torch.eye(2, dtype=dtype)
    cov2d = jac @ cov_cam @ jac.transpose(-1, -2) + blur

    means2d = torch.stack([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy], dim=-1)

    return ProjectedSplats(
        means2d=means2d,
        cov2d=cov2d,
        depths=z,
        features=gaussians.features[visible],
        opacities=gaussians.activated_opacities()[visible].squeeze(-1),
        indices=visible,
    )


# ============================================================================
# Compositing
# ============================================================================

def _check_sorted(splats: ProjectedSplats) -> None:
    depths = splats.depths.detach()
    indices = splats.indices
    inverted = depths[1:] < depths[:-1]
    tie_inverted = (depths[1:] == depths[:-1]) & (indices[1:] < indices[:-1])
    if bool((inverted | tie_inverted).any()):
        raise ContractViolationError("splats must be sorted by ascending depth")


def _composite_pixels(
    splats: ProjectedSplats,
    inv_cov: tuple,
    pixels: torch.Tensor,
) -> tuple:
    """Composite one block of pixel centers (P, 2); returns (P, C) and (P,)."""
    inv_a, inv_b, inv_c = inv_cov
    delta = pixels.unsqueeze(0) - splats.means2d.unsqueeze(1)
    dx, dy = delta[..., 0], delta[..., 1]
    power = -0.5 * (inv_a[:, None] * dx * dx + 2.0 * inv_b[:, None] * dx * dy + inv_c[:, None] * dy * dy)
    alpha = (splats.opacities[:, None] * torch.exp(power)).clamp(0.0, ALPHA_MAX)

    transmittance = torch.cumprod(1.0 - alpha, dim=0)
    before = torch.cat([torch.ones_like(transmittance[:1]), transmittance[:-1]], dim=0)
    weights = alpha * before
    color = weights.transpose(0, 1) @ splats.features
    return color, 1.0 - transmittance[-1]


def _inverse_cov(cov2d: torch.Tensor) -> tuple:
    a = cov2d[:, 0, 0]
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1]
    det = a * c - b * b
    return c / det, -b / det, a / det


def _footprint_boxes(splats: ProjectedSplats) -> torch.Tensor:
    """Per-splat pixel bounding box (x0, y0, x1, y1) of the 1e-8 density level."""
    cov = splats.cov2d.detach()
    radius = FOOTPRINT_SIGMAS * torch.sqrt(torch.stack([cov[:, 0, 0], cov[:, 1, 1]], dim=-1))
    center = splats.means2d.detach()
    return torch.cat([center - radius, center + radius], dim=-1)


def composite(
    splats: ProjectedSplats,
    height: int,
    width: int,
    channels: int,
    tile_size: Optional[int] = None,
    region_tag: Union[StreamTag, str] = StreamTag.HEAD,
) -> FeatureMap:
    """
    Alpha-composite depth-sorted splats into an H×W×C feature map.

    The returned map's alpha plane is the accumulated opacity 1 − T_final.

    Raises:
        ContractViolationError: splats are not in ascending depth order
    """
    dtype = splats.features.dtype
    if len(splats) == 0:
        return FeatureMap(
            data=torch.zeros(height, width, channels, dtype=dtype),
            alpha=torch.zeros(height, width, dtype=dtype),
            region_tag=region_tag,
        )
    if splats.features.shape[1] != channels:
        raise InvalidArgumentError(
            f"splat features have {splats.features.shape[1]} channels, expected {channels}"
        )
    _check_sorted(splats)

    inv_cov = _inverse_cov(splats.cov2d)
    rows = torch.arange(height, dtype=dtype)
    cols = torch.arange(width, dtype=dtype)

    if tile_size is None:
        grid_y, grid_x = torch.meshgrid(rows, cols, indexing="ij")
        pixels = torch.stack([grid_x.reshape(-1), grid_y.reshape(-1)], dim=-1)
        color, alpha = _composite_pixels(splats, inv_cov, pixels)
        return FeatureMap(
            data=color.reshape(height, width, channels),
            alpha=alpha.reshape(height, width),
            region_tag=region_tag,
        )

    if tile_size < 1:
        raise InvalidArgumentError("tile_size must be a positive integer")

    boxes = _footprint_boxes(splats)
    row_blocks = []
    alpha_blocks = []
    for y0 in range(0, height, tile_size):
        y1 = min(y0 + tile_size, height)
        color_tiles = []
        alpha_tiles = []
        for x0 in range(0, width, tile_size):
            x1 = min(x0 + tile_size, width)
            grid_y, grid_x = torch.meshgrid(rows[y0:y1], cols[x0:x1], indexing="ij")
            pixels = torch.stack([grid_x.reshape(-1), grid_y.reshape(-1)], dim=-1)

            hits = (
                (boxes[:, 0] <= x1 - 1) & (boxes[:, 2] >= x0)
                & (boxes[:, 1] <= y1 - 1) & (boxes[:, 3] >= y0)
            )
            selected = torch.nonzero(hits).squeeze(1)
            if selected.numel() == 0:
                color = torch.zeros(pixels.shape[0], channels, dtype=dtype)
                alpha = torch.zeros(pixels.shape[0], dtype=dtype)
            else:
                tile_splats = splats.take(selected)
                tile_inv = tuple(term[selected] for term in inv_cov)
                color, alpha = _composite_pixels(tile_splats, tile_inv, pixels)
            color_tiles.append(color.reshape(y1 - y0, x1 - x0, channels))
            alpha_tiles.append(alpha.reshape(y1 - y0, x1 - x0))
        row_blocks.append(torch.cat(color_tiles, dim=1))
        alpha_blocks.append(torch.cat(alpha_tiles, dim=1))

    return FeatureMap(
        data=torch.cat(row_blocks, dim=0),
        alpha=torch.cat(alpha_blocks, dim=0),
        region_tag=region_tag,
    )


def rasterize(
    gaussians: GaussianSet,
    camera: Camera,
    tile_size: Optional[int] = None,
) -> FeatureMap:
    """project → stable depth sort → composite; differentiable in every attribute."""
    splats = project(gaussians, camera).sorted()
    return composite(
        splats,
        camera.height,
        camera.width,
        gaussians.feature_dim,
        tile_size=tile_size,
        region_tag=gaussians.stream_tag,
    )


# ============================================================================
# Stream Concatenation
# ============================================================================

def concat_streams(face: GaussianSet, eye: GaussianSet) -> GaussianSet:
    """
    Concatenate face and eye sets into one head set, face rows first.

    Eye log-scales are broadcast from one to three columns.
    """
    if face.feature_dim != eye.feature_dim:
        raise InvalidArgumentError(
            f"feature dimensions differ: face {face.feature_dim}, eye {eye.feature_dim}"
        )
    if face.scales.shape[1] == eye.scales.shape[1]:
        scales = torch.cat([face.scales, eye.scales], dim=0)
    else:
        scales = torch.cat([face.log_scales3(), eye.log_scales3()], dim=0)

    return GaussianSet(
        centers=torch.cat([face.centers, eye.centers], dim=0),
        features=torch.cat([face.features, eye.features], dim=0),
        rotations=torch.cat([face.rotations, eye.rotations], dim=0),
        scales=scales,
        opacities=torch.cat([face.opacities, eye.opacities], dim=0),
        stream_tag=StreamTag.HEAD,
    )
