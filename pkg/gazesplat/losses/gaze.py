"""
Angular error and the functional gaze-redirection loss.
"""

from typing import Optional, Protocol, runtime_checkable

import torch

from gazesplat.errors import InvalidArgumentError, MissingDependencyError

NORM_FLOOR = 1e-12


@runtime_checkable
class GazeEstimator(Protocol):
    """Anything mapping (B, H, W, 3) images to (B, 3) gaze directions."""

    def gaze_vectors(self, images: torch.Tensor) -> torch.Tensor:
        ...


def angular_error(v: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """
    Angle in radians between direction vectors along the last axis, in [0, π].

    Computed as atan2(‖v × w‖, v · w), which equals the clamped arccos of the
    normalised dot product and keeps a finite gradient at parallel vectors.

    Raises:
        InvalidArgumentError: either vector has norm ≤ 1e-12
    """
    if v.shape[-1] != 3 or w.shape[-1] != 3:
        raise InvalidArgumentError("angular_error expects 3-vectors")
    if bool((v.detach().norm(dim=-1) <= NORM_FLOOR).any()) or bool((w.detach().norm(dim=-1) <= NORM_FLOOR).any()):
        raise InvalidArgumentError("angular_error is undefined for zero vectors")
    v, w = torch.broadcast_tensors(v, w)
    cross = torch.linalg.cross(v, w, dim=-1)
    sin_sq = (cross * cross).sum(-1)
    # sqrt has no gradient at 0; parallel vectors take the zero branch
    nonzero = sin_sq > 0
    sin_part = torch.where(nonzero, torch.sqrt(torch.where(nonzero, sin_sq, torch.ones_like(sin_sq))), torch.zeros_like(sin_sq))
    cos_part = (v * w).sum(-1)
    return torch.atan2(sin_part, cos_part)


def gaze_loss(
    rendered: torch.Tensor,
    target: torch.Tensor,
    estimator: Optional[GazeEstimator],
) -> torch.Tensor:
    """
    Mean angular error between the estimator's gaze on rendered and target images.

    The target estimate is computed without gradient.
    """
    if estimator is None:
        raise MissingDependencyError("gaze loss needs a loaded gaze estimator")
    if rendered.dim() == 3:
        rendered = rendered.unsqueeze(0)
        target = target.unsqueeze(0)
    with torch.no_grad():
        target_gaze = estimator.gaze_vectors(target)
    rendered_gaze = estimator.gaze_vectors(rendered)
    return angular_error(rendered_gaze, target_gaze.to(rendered_gaze.dtype)).mean()
