"""
Two-stream canonical → deformed fields.

FaceField blends an expression branch and a pose branch per Gaussian with
landmark-distance weights (λτ, λγ). EyeField rotates each eyeball rigidly
about its center, the rotation being the analytic gaze rotation composed with
a learned per-eyeball quaternion correction, plus expression and gaze offsets
for colour, rotation, scale and opacity.

Every branch MLP ends in a zero-initialised layer, so a freshly built field is
the identity deformation.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import torch
import torch.nn as nn

from gazesplat.deform.gaze import gaze_rotation_quat, gaze_to_vector
from gazesplat.deform.pose import HeadPose
from gazesplat.errors import InvalidArgumentError, InvalidConfigurationError
from gazesplat.gauss.core import Camera, GaussianSet, normalize_quat, quat_multiply, quat_to_rotmat
from gazesplat.models import StreamTag

logger = logging.getLogger(__name__)

POSE_DIM = 7
GAZE_DIM = 3
FACE_KAPPA_DIM = 4 + 3 + 1
EYE_KAPPA_DIM = 4 + 1 + 1


# ============================================================================
# Frame Conditions
# ============================================================================

@dataclass
class FrameCondition:
    """Per-frame controls: expression τ, head pose γ, gaze φ and camera."""

    tau: torch.Tensor
    pose: HeadPose
    pitch: float
    yaw: float
    camera: Camera
    identity: int = 0

    def __post_init__(self):
        self.tau = torch.as_tensor(self.tau, dtype=torch.float32)
        if self.tau.dim() != 1:
            raise InvalidArgumentError("tau must be a 1-D vector")
        if not math.isfinite(self.pitch) or abs(self.pitch) > math.pi / 2:
            raise InvalidArgumentError(f"pitch {self.pitch} outside [-pi/2, pi/2]")
        if not math.isfinite(self.yaw) or abs(self.yaw) > math.pi:
            raise InvalidArgumentError(f"yaw {self.yaw} outside [-pi, pi]")

    @property
    def phi(self) -> Tuple[float, float]:
        return (self.pitch, self.yaw)

    def with_gaze(self, pitch: float, yaw: float) -> "FrameCondition":
        return FrameCondition(
            tau=self.tau,
            pose=self.pose,
            pitch=pitch,
            yaw=yaw,
            camera=self.camera,
            identity=self.identity,
        )


# ============================================================================
# Deformation MLPs
# ============================================================================

class DeformMLP(nn.Module):
    """Softplus MLP whose output layer starts at zero."""

    def __init__(self, input_dim: int, output_dim: int, hidden_dim: int = 64, hidden_layers: int = 3):
        super().__init__()
        self.input_dim = input_dim
        self.output_dim = output_dim

        dims = [input_dim] + [hidden_dim] * hidden_layers
        self.fcs = nn.ModuleList([nn.Linear(n, k) for n, k in zip(dims[:-1], dims[1:])])
        self.activation = nn.Softplus()
        self.output_linear = nn.Linear(hidden_dim, output_dim)
        nn.init.zeros_(self.output_linear.weight)
        nn.init.zeros_(self.output_linear.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.input_dim:
            raise InvalidConfigurationError(
                f"MLP expects {self.input_dim} input features, got {x.shape[-1]}"
            )
        h = x
        for layer in self.fcs:
            h = self.activation(layer(h))
        return self.output_linear(h)


def _with_condition(points: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
    return torch.cat([points, condition.to(points.dtype).expand(points.shape[0], -1)], dim=-1)


# ============================================================================
# Face Stream
# ============================================================================

def landmark_weights(
    centers: torch.Tensor,
    landmarks: torch.Tensor,
    d1: float,
    d2: float,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Expression / pose blending weights from the distance to the nearest landmark.

    λτ = 1 below d1, 0 above d2 and (d2 − d)/(d2 − d1) in between; λγ = 1 − λτ.
    """
    if not d1 < d2:
        raise InvalidConfigurationError(f"d1 ({d1}) must be smaller than d2 ({d2})")
    if landmarks.dim() != 2 or landmarks.shape[0] < 1 or landmarks.shape[1] != 3:
        raise InvalidArgumentError("landmarks must be an L x 3 array with L >= 1")

    delta = centers.unsqueeze(1) - landmarks.to(centers.dtype).unsqueeze(0)
    dist = delta.norm(dim=-1).min(dim=1).values
    ramp = (d2 - dist) / (d2 - d1)
    lam_tau = torch.where(dist < d1, torch.ones_like(dist), torch.where(dist > d2, torch.zeros_like(dist), ramp))
    return lam_tau, 1.0 - lam_tau


class FaceField(nn.Module):
    """Face-only Gaussians with expression and pose deformation branches."""

    def __init__(
        self,
        canonical: GaussianSet,
        landmarks: torch.Tensor,
        condition_dim: int,
        d1: float = 0.15,
        d2: float = 0.25,
        hidden_dim: int = 64,
        hidden_layers: int = 3,
    ):
        super().__init__()
        if not d1 < d2:
            raise InvalidConfigurationError(f"d1 ({d1}) must be smaller than d2 ({d2})")
        if canonical.scales.shape[1] != 3:
            raise InvalidConfigurationError("face-stream scales must have three columns")

        self.condition_dim = condition_dim
        self.d1 = float(d1)
        self.d2 = float(d2)
        feature_dim = canonical.feature_dim

        self.centers = nn.Parameter(canonical.centers.detach().clone())
        self.features = nn.Parameter(canonical.features.detach().clone())
        self.rotations = nn.Parameter(canonical.rotations.detach().clone())
        self.scales = nn.Parameter(canonical.scales.detach().clone())
        self.opacities = nn.Parameter(canonical.opacities.detach().clone())
        self.register_buffer("landmarks", landmarks.detach().clone().to(canonical.dtype))

        self.expr_mu = DeformMLP(3 + condition_dim, 3, hidden_dim, hidden_layers)
        self.expr_color = DeformMLP(feature_dim + condition_dim, feature_dim, hidden_dim, hidden_layers)
        self.expr_kappa = DeformMLP(3 + condition_dim, FACE_KAPPA_DIM, hidden_dim, hidden_layers)
        self.pose_mu = DeformMLP(3 + POSE_DIM, 3, hidden_dim, hidden_layers)
        self.pose_color = DeformMLP(feature_dim + POSE_DIM, feature_dim, hidden_dim, hidden_layers)
        self.pose_kappa = DeformMLP(3 + POSE_DIM, FACE_KAPPA_DIM, hidden_dim, hidden_layers)

    def canonical(self) -> GaussianSet:
        return GaussianSet(
            centers=self.centers,
            features=self.features,
            rotations=self.rotations,
            scales=self.scales,
            opacities=self.opacities,
            stream_tag=StreamTag.FACE,
        )

    def weights(self) -> Tuple[torch.Tensor, torch.Tensor]:
        return landmark_weights(self.centers, self.landmarks, self.d1, self.d2)

    def forward(self, condition: torch.Tensor, pose_vector: torch.Tensor) -> GaussianSet:
        if condition.shape[-1] != self.condition_dim:
            raise InvalidConfigurationError(
                f"face field expects a {self.condition_dim}-d condition, got {condition.shape[-1]}"
            )
        if pose_vector.shape[-1] != POSE_DIM:
            raise InvalidConfigurationError(f"pose vector must have {POSE_DIM} entries")

        lam_tau, lam_gamma = self.weights()
        lam_tau = lam_tau.unsqueeze(-1)
        lam_gamma = lam_gamma.unsqueeze(-1)

        mu_tau = _with_condition(self.centers, condition)
        mu_gamma = _with_condition(self.centers, pose_vector)
        z_tau = _with_condition(self.features, condition)
        z_gamma = _with_condition(self.features, pose_vector)

        centers = self.centers + lam_tau * self.expr_mu(mu_tau) + lam_gamma * self.pose_mu(mu_gamma)
        color = self.features + lam_tau * self.expr_color(z_tau) + lam_gamma * self.pose_color(z_gamma)
        kappa = lam_tau * self.expr_kappa(mu_tau) + lam_gamma * self.pose_kappa(mu_gamma)
        d_rot, d_scale, d_opacity = torch.split(kappa, [4, 3, 1], dim=-1)

        return GaussianSet(
            centers=centers,
            features=torch.sigmoid(color),
            rotations=normalize_quat(self.rotations + d_rot),
            scales=self.scales + d_scale,
            opacities=self.opacities + d_opacity,
            stream_tag=StreamTag.FACE,
        )


def deform_face(
    field: FaceField,
    tau: torch.Tensor,
    gamma: Union[HeadPose, torch.Tensor],
) -> GaussianSet:
    """Canonical face Gaussians deformed by expression code and head pose."""
    dtype = field.centers.dtype
    pose_vector = gamma.as_vector(dtype) if isinstance(gamma, HeadPose) else gamma.to(dtype)
    return field(tau.to(dtype), pose_vector)


# ============================================================================
# Eye Stream
# ============================================================================

class EyeField(nn.Module):
    """
    Eyeball Gaussians (isotropic scales) rotated by gaze.

    rotation_mode "rigid" rotates each eyeball about its center; "offset"
    replaces the rotation with an additive gaze-conditioned center offset.
    """

    def __init__(
        self,
        canonical: GaussianSet,
        eyeball_centers: Optional[torch.Tensor],
        eye_index: torch.Tensor,
        condition_dim: int,
        rotation_mode: str = "rigid",
        hidden_dim: int = 64,
        hidden_layers: int = 3,
    ):
        super().__init__()
        if eyeball_centers is None or tuple(eyeball_centers.shape) != (2, 3):
            raise InvalidConfigurationError("eye field needs a 2 x 3 eyeball-center annotation")
        if canonical.scales.shape[1] != 1:
            raise InvalidConfigurationError("eye-stream scales must have exactly one column")
        if eye_index.shape != (canonical.n,):
            raise InvalidConfigurationError("eye_index must assign every eye Gaussian to an eyeball")
        if rotation_mode not in ("rigid", "offset"):
            raise InvalidConfigurationError(f"Unknown rotation mode '{rotation_mode}'")

        self.condition_dim = condition_dim
        self.rotation_mode = rotation_mode
        feature_dim = canonical.feature_dim

        self.centers = nn.Parameter(canonical.centers.detach().clone())
        self.features = nn.Parameter(canonical.features.detach().clone())
        self.rotations = nn.Parameter(canonical.rotations.detach().clone())
        self.scales = nn.Parameter(canonical.scales.detach().clone())
        self.opacities = nn.Parameter(canonical.opacities.detach().clone())
        self.register_buffer("eyeball_centers", eyeball_centers.detach().clone().to(canonical.dtype))
        self.register_buffer("eye_index", eye_index.detach().clone().long())

        self.expr_mu = DeformMLP(3 + condition_dim, 3, hidden_dim, hidden_layers)
        self.expr_color = DeformMLP(feature_dim + condition_dim, feature_dim, hidden_dim, hidden_layers)
        self.expr_kappa = DeformMLP(3 + condition_dim, EYE_KAPPA_DIM, hidden_dim, hidden_layers)
        gaze_mu_out = 4 if rotation_mode == "rigid" else 3
        self.gaze_mu = DeformMLP(3 + GAZE_DIM, gaze_mu_out, hidden_dim, hidden_layers)
        self.gaze_color = DeformMLP(feature_dim + GAZE_DIM, feature_dim, hidden_dim, hidden_layers)
        self.gaze_kappa = DeformMLP(3 + GAZE_DIM, EYE_KAPPA_DIM, hidden_dim, hidden_layers)

    def canonical(self) -> GaussianSet:
        return GaussianSet(
            centers=self.centers,
            features=self.features,
            rotations=self.rotations,
            scales=self.scales,
            opacities=self.opacities,
            stream_tag=StreamTag.EYE,
        )

    def eyeball_rotations(self, pitch, yaw) -> torch.Tensor:
        """Per-eyeball unit quaternions (2, 4): analytic gaze rotation ⊗ learned correction."""
        dtype = self.centers.dtype
        gaze = gaze_to_vector(pitch, yaw).to(dtype)
        base = gaze_rotation_quat(pitch, yaw).to(dtype).expand(2, 4)
        correction = self.gaze_mu(_with_condition(self.eyeball_centers, gaze))
        identity = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=dtype)
        return quat_multiply(base, normalize_quat(identity + correction))

    def forward(self, condition: torch.Tensor, pitch, yaw) -> GaussianSet:
        if condition.shape[-1] != self.condition_dim:
            raise InvalidConfigurationError(
                f"eye field expects a {self.condition_dim}-d condition, got {condition.shape[-1]}"
            )
        dtype = self.centers.dtype
        gaze = gaze_to_vector(pitch, yaw).to(dtype)

        mu_tau = _with_condition(self.centers, condition)
        mu_phi = _with_condition(self.centers, gaze)
        z_tau = _with_condition(self.features, condition)
        z_phi = _with_condition(self.features, gaze)

        expr_offset = self.expr_mu(mu_tau)
        if self.rotation_mode == "rigid":
            q_eye = self.eyeball_rotations(pitch, yaw)
            rot = quat_to_rotmat(q_eye)[self.eye_index]
            pivot = self.eyeball_centers[self.eye_index]
            rotated = (rot @ (self.centers - pivot).unsqueeze(-1)).squeeze(-1) + pivot
            centers = expr_offset + rotated
            q_point = q_eye[self.eye_index]
        else:
            centers = self.centers + expr_offset + self.gaze_mu(mu_phi)
            q_point = None

        color = self.features + self.expr_color(z_tau) + self.gaze_color(z_phi)
        kappa = self.expr_kappa(mu_tau) + self.gaze_kappa(mu_phi)
        d_rot, d_scale, d_opacity = torch.split(kappa, [4, 1, 1], dim=-1)

        rotations = normalize_quat(self.rotations + d_rot)
        if q_point is not None:
            rotations = quat_multiply(q_point, rotations)

        return GaussianSet(
            centers=centers,
            features=torch.sigmoid(color),
            rotations=rotations,
            scales=self.scales + d_scale,
            opacities=self.opacities + d_opacity,
            stream_tag=StreamTag.EYE,
        )


def rotate_eyes(
    field: EyeField,
    tau: torch.Tensor,
    phi: Sequence[float],
) -> GaussianSet:
    """Canonical eye Gaussians rotated to gaze φ = (pitch, yaw)."""
    pitch, yaw = phi
    if abs(float(pitch)) > math.pi / 2 or abs(float(yaw)) > math.pi:
        raise InvalidArgumentError(f"gaze ({float(pitch)}, {float(yaw)}) outside the valid range")
    return field(tau.to(field.centers.dtype), pitch, yaw)
