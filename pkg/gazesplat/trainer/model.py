"""
The full GazeGaussian model: two deformation fields, a per-identity latent
table and the expression-guided renderer, wired frame by frame.

    canonical → deform (τ, γ / τ, φ) → world → rasterize → render

The `no_two_stream` ablation merges the eye Gaussians into the face field.
The eyeball centres then join the landmark set so eye Gaussians take the
expression branch, whose condition gains the gaze vector.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn

from gazesplat.deform.fields import GAZE_DIM, EyeField, FaceField, FrameCondition
from gazesplat.deform.gaze import gaze_to_vector
from gazesplat.deform.pose import to_world
from gazesplat.egnr.renderer import ExpressionGuidedRenderer
from gazesplat.errors import InvalidArgumentError, InvalidConfigurationError
from gazesplat.gauss.core import GaussianSet
from gazesplat.models import TrainConfig
from gazesplat.splat.featuremap import FeatureMap
from gazesplat.splat.rasterizer import concat_streams, rasterize
from gazesplat.trainer.init import CanonicalGaussians

logger = logging.getLogger(__name__)

TWO_STREAM_REGIONS = ("face", "eye", "head")
MERGED_REGIONS = ("head",)


@dataclass
class ModelOutput:
    """Feature maps and rendered images of one frame, keyed by region."""

    maps: Dict[str, FeatureMap] = field(default_factory=dict)
    images: Dict[str, torch.Tensor] = field(default_factory=dict)

    @property
    def regions(self) -> Tuple[str, ...]:
        return tuple(self.images)

    def map_rgb(self) -> Dict[str, torch.Tensor]:
        return {region: fmap.rgb() for region, fmap in self.maps.items()}


class GazeGaussianModel(nn.Module):
    """Two-stream Gaussian head with identity codes and a neural renderer."""

    def __init__(self, canonical: CanonicalGaussians, config: TrainConfig, n_identities: int):
        super().__init__()
        if n_identities < 1:
            raise InvalidConfigurationError("model needs at least one identity")
        self.tau_dim = config.tau_dim
        self.identity_dim = config.identity_dim
        self.tile_size = config.tile_size
        self.merged = config.ablation.no_two_stream
        condition_dim = config.condition_dim
        feature_dim = canonical.face.feature_dim

        if self.merged:
            merged = concat_streams(canonical.face, canonical.eye)
            landmarks = torch.cat([canonical.landmarks, canonical.eyeball_centers], dim=0)
            self.face_field = FaceField(
                merged,
                landmarks,
                condition_dim + GAZE_DIM,
                d1=config.d1,
                d2=config.d2,
                hidden_dim=config.mlp_width,
                hidden_layers=config.mlp_depth,
            )
            self.eye_field = None
        else:
            self.face_field = FaceField(
                canonical.face,
                canonical.landmarks,
                condition_dim,
                d1=config.d1,
                d2=config.d2,
                hidden_dim=config.mlp_width,
                hidden_layers=config.mlp_depth,
            )
            self.eye_field = EyeField(
                canonical.eye,
                canonical.eyeball_centers,
                canonical.eye_index,
                condition_dim,
                rotation_mode="offset" if config.ablation.no_eye_rotation else "rigid",
                hidden_dim=config.mlp_width,
                hidden_layers=config.mlp_depth,
            )

        self.n_face = canonical.face.n
        self.identity_codes = nn.Parameter(torch.zeros(n_identities, config.identity_dim))
        self.register_buffer("trained_identities", torch.zeros(n_identities, dtype=torch.int64))
        self.renderer = ExpressionGuidedRenderer(
            feature_dim,
            condition_dim,
            base_width=config.renderer_width,
            use_attention=not config.ablation.no_expression_guided,
        )

    @property
    def n_identities(self) -> int:
        return self.identity_codes.shape[0]

    @property
    def regions(self) -> Tuple[str, ...]:
        return MERGED_REGIONS if self.merged else TWO_STREAM_REGIONS

    # ------------------------------------------------------------------
    # Identity codes
    # ------------------------------------------------------------------

    def mark_trained(self, identities: Sequence[int]) -> None:
        with torch.no_grad():
            self.trained_identities[list(identities)] = 1

    def mean_identity_code(self) -> torch.Tensor:
        trained = self.trained_identities.bool()
        if not bool(trained.any()):
            return self.identity_codes.detach().mean(dim=0)
        return self.identity_codes.detach()[trained].mean(dim=0)

    def reset_identity(self, identity: int) -> None:
        """Start an unseen identity from the mean trained code."""
        self._check_identity(identity)
        with torch.no_grad():
            self.identity_codes[identity] = self.mean_identity_code()

    def _check_identity(self, identity: int) -> None:
        if not 0 <= identity < self.n_identities:
            raise InvalidArgumentError(f"identity {identity} outside [0, {self.n_identities})")

    def condition_code(self, condition: FrameCondition) -> torch.Tensor:
        """concat(τ, identity code) fed to every τ-conditioned component."""
        if condition.tau.shape[0] != self.tau_dim:
            raise InvalidConfigurationError(
                f"model expects {self.tau_dim} expression coefficients, got {condition.tau.shape[0]}"
            )
        self._check_identity(condition.identity)
        dtype = self.identity_codes.dtype
        return torch.cat([condition.tau.to(dtype), self.identity_codes[condition.identity]])

    # ------------------------------------------------------------------
    # Frame rendering
    # ------------------------------------------------------------------

    def gaussians(self, condition: FrameCondition, code: Optional[torch.Tensor] = None) -> Dict[str, GaussianSet]:
        """World-space Gaussian sets of one frame, keyed by region."""
        if code is None:
            code = self.condition_code(condition)
        dtype = code.dtype
        pose_vector = condition.pose.as_vector(dtype)

        if self.merged:
            gaze = gaze_to_vector(condition.pitch, condition.yaw).to(dtype)
            head = self.face_field(torch.cat([code, gaze]), pose_vector)
            return {"head": to_world(head, condition.pose).with_tag("head")}

        face = to_world(self.face_field(code, pose_vector), condition.pose)
        eye = to_world(self.eye_field(code, condition.pitch, condition.yaw), condition.pose)
        return {"face": face, "eye": eye, "head": concat_streams(face, eye)}

    def forward(self, condition: FrameCondition, regions: Optional[Sequence[str]] = None) -> ModelOutput:
        code = self.condition_code(condition)
        sets = self.gaussians(condition, code)
        wanted: List[str] = [r for r in (regions or self.regions) if r in sets]
        if not wanted:
            raise InvalidArgumentError(f"no renderable region among {list(regions or [])}")

        maps = {region: rasterize(sets[region], condition.camera, self.tile_size) for region in wanted}
        batch = torch.stack([maps[region].to_chw() for region in wanted])
        images = self.renderer(batch, code.unsqueeze(0).expand(len(wanted), -1))
        return ModelOutput(
            maps=maps,
            images={region: images[i].permute(1, 2, 0) for i, region in enumerate(wanted)},
        )

    def render_head(self, condition: FrameCondition) -> torch.Tensor:
        """H×W×3 head image only."""
        return self(condition, regions=("head",)).images["head"]

    # ------------------------------------------------------------------
    # Parameter groups
    # ------------------------------------------------------------------

    def parameter_groups(self) -> Dict[str, List[nn.Parameter]]:
        """Parameters split by learning-rate multiplier key."""
        groups: Dict[str, List[nn.Parameter]] = {
            "centers": [], "features": [], "rotations": [], "scales": [], "opacities": [],
            "mlps": [], "renderer": list(self.renderer.parameters()), "identity": [],
        }
        for stream in (self.face_field, self.eye_field):
            if stream is None:
                continue
            for name, param in stream.named_parameters(recurse=False):
                groups[name].append(param)
            for child in stream.children():
                groups["mlps"].extend(child.parameters())
        if self.identity_dim > 0:
            groups["identity"].append(self.identity_codes)
        return groups
