"""
Gaussian primitive types and the quaternion / covariance math shared by both
streams.

Scales are stored as logs and opacities as logits; activation happens on read
so optimisation stays unconstrained. Quaternions use (w, x, y, z) order and are
normalised on every read, never written back.
"""

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import torch
import torch.nn.functional as F

from gazesplat.errors import DegenerateCovarianceError, InvalidArgumentError
from gazesplat.models import CameraRecord, StreamTag

QUAT_NORM_FLOOR = 1e-12
COVARIANCE_EPS = 1e-9
MAX_CONDITION = 1e12


# ============================================================================
# Quaternion and Covariance Math
# ============================================================================

def normalize_quat(q: torch.Tensor) -> torch.Tensor:
    """Unit-normalise quaternions along the last axis."""
    return F.normalize(q, dim=-1, eps=QUAT_NORM_FLOOR)


def quat_multiply(q1: torch.Tensor, q2: torch.Tensor) -> torch.Tensor:
    """Hamilton product q1 ⊗ q2 (w, x, y, z convention)."""
    w1, x1, y1, z1 = q1.unbind(-1)
    w2, x2, y2, z2 = q2.unbind(-1)

    w = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2
    x = w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2
    y = w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2
    z = w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2

    return torch.stack([w, x, y, z], dim=-1)


def quat_conjugate(q: torch.Tensor) -> torch.Tensor:
    return q * q.new_tensor([1.0, -1.0, -1.0, -1.0])


def quat_to_rotmat(q: torch.Tensor) -> torch.Tensor:
    """
    Convert quaternions (w, x, y, z) to rotation matrices.

    Args:
        q: (..., 4) quaternions, normalised internally

    Returns:
        (..., 3, 3) rotation matrices

    Raises:
        InvalidArgumentError: non-finite input or norm below 1e-12
    """
    if q.shape[-1] != 4:
        raise InvalidArgumentError(f"quaternion must have 4 components, got {q.shape[-1]}")
    if not torch.isfinite(q).all():
        raise InvalidArgumentError("quaternion contains non-finite values")
    if q.numel() and bool((q.detach().norm(dim=-1) <= QUAT_NORM_FLOOR).any()):
        raise InvalidArgumentError("quaternion norm must exceed 1e-12")

    q = normalize_quat(q)
    w, x, y, z = q.unbind(-1)

    rot = torch.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], dim=-1)
    return rot.reshape(*q.shape[:-1], 3, 3)


def covariance(q: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
    """
    Build Σ = R S Sᵀ Rᵀ from quaternions and activated scales.

    Args:
        q: (..., 4) quaternions
        s: (..., 3) anisotropic or (..., 1) isotropic activated scales

    Returns:
        (..., 3, 3) symmetric PSD covariance matrices
    """
    if s.shape[-1] not in (1, 3):
        raise InvalidArgumentError(f"scale vector must have 1 or 3 columns, got {s.shape[-1]}")
    if s.numel() and not bool((s.detach() > 0).all()):
        raise DegenerateCovarianceError("activated scales must be strictly positive")

    rot = quat_to_rotmat(q)
    scale3 = s.expand(*s.shape[:-1], 3)
    rs = rot * scale3.unsqueeze(-2)
    return rs @ rs.transpose(-1, -2)


def gaussian_density(x: torch.Tensor, mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """
    Unnormalised Gaussian exp(-½ (x−μ)ᵀ Σ⁻¹ (x−μ)).

    Σ is regularised with 1e-9·I before the solve.

    Raises:
        DegenerateCovarianceError: Σ singular or condition number ≥ 1e12
    """
    with torch.no_grad():
        eig = torch.linalg.eigvalsh(sigma)
        smallest = eig[..., 0]
        largest = eig[..., -1]
        if bool((smallest <= 0).any()) or bool((largest / smallest >= MAX_CONDITION).any()):
            raise DegenerateCovarianceError("covariance is singular or ill-conditioned")

    eye = torch.eye(3, dtype=sigma.dtype, device=sigma.device)
    delta = x - mu
    solved = torch.linalg.solve(sigma + COVARIANCE_EPS * eye, delta.unsqueeze(-1)).squeeze(-1)
    return torch.exp(-0.5 * (delta * solved).sum(-1))


# ============================================================================
# Gaussian Sets
# ============================================================================

@dataclass
class GaussianSet:
    """Attribute arrays of one Gaussian stream in one space."""

    centers: torch.Tensor
    features: torch.Tensor
    rotations: torch.Tensor
    scales: torch.Tensor
    opacities: torch.Tensor
    stream_tag: StreamTag = StreamTag.FACE

    def __post_init__(self):
        self.stream_tag = StreamTag(self.stream_tag)
        arrays = {
            "centers": self.centers,
            "features": self.features,
            "rotations": self.rotations,
            "scales": self.scales,
            "opacities": self.opacities,
        }
        for name, value in arrays.items():
            if value.dim() != 2:
                raise InvalidArgumentError(f"{name} must be 2-D, got shape {tuple(value.shape)}")
        n = self.centers.shape[0]
        for name, value in arrays.items():
            if value.shape[0] != n:
                raise InvalidArgumentError(
                    f"{name} has {value.shape[0]} rows, expected {n}"
                )
        if self.centers.shape[1] != 3:
            raise InvalidArgumentError("centers must have 3 columns")
        if self.rotations.shape[1] != 4:
            raise InvalidArgumentError("rotations must have 4 columns")
        if self.opacities.shape[1] != 1:
            raise InvalidArgumentError("opacities must have 1 column")
        if self.scales.shape[1] not in (1, 3):
            raise InvalidArgumentError("scales must have 1 or 3 columns")
        if self.stream_tag == StreamTag.EYE and self.scales.shape[1] != 1:
            raise InvalidArgumentError("eye-stream scales must have exactly one column")

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def dtype(self) -> torch.dtype:
        return self.centers.dtype

    def activated_scales(self) -> torch.Tensor:
        return torch.exp(self.scales)

    def activated_opacities(self) -> torch.Tensor:
        return torch.sigmoid(self.opacities)

    def unit_rotations(self) -> torch.Tensor:
        return normalize_quat(self.rotations)

    def covariances(self) -> torch.Tensor:
        return covariance(self.rotations, self.activated_scales())

    def log_scales3(self) -> torch.Tensor:
        """Log-scales broadcast to three columns."""
        return self.scales.expand(self.n, 3) if self.scales.shape[1] == 1 else self.scales

    def with_tag(self, tag: Union[StreamTag, str]) -> "GaussianSet":
        return replace(self, stream_tag=StreamTag(tag))

    def detach(self) -> "GaussianSet":
        return GaussianSet(
            centers=self.centers.detach(),
            features=self.features.detach(),
            rotations=self.rotations.detach(),
            scales=self.scales.detach(),
            opacities=self.opacities.detach(),
            stream_tag=self.stream_tag,
        )

    def to(self, dtype: torch.dtype) -> "GaussianSet":
        return GaussianSet(
            centers=self.centers.to(dtype),
            features=self.features.to(dtype),
            rotations=self.rotations.to(dtype),
            scales=self.scales.to(dtype),
            opacities=self.opacities.to(dtype),
            stream_tag=self.stream_tag,
        )

    @classmethod
    def empty(
        cls,
        feature_dim: int,
        stream_tag: Union[StreamTag, str] = StreamTag.EYE,
        scale_dim: int = 1,
        dtype: torch.dtype = torch.float32,
    ) -> "GaussianSet":
        return cls(
            centers=torch.zeros(0, 3, dtype=dtype),
            features=torch.zeros(0, feature_dim, dtype=dtype),
            rotations=torch.zeros(0, 4, dtype=dtype),
            scales=torch.zeros(0, scale_dim, dtype=dtype),
            opacities=torch.zeros(0, 1, dtype=dtype),
            stream_tag=stream_tag,
        )


# ============================================================================
# Cameras
# ============================================================================

@dataclass
class Camera:
    """
    Pinhole camera, OpenCV axes (x right, y down, z forward).

    extrinsics maps world to camera coordinates. Pixels are sampled at integer
    coordinates, so a point on the optical axis lands on (cx, cy).
    """

    extrinsics: torch.Tensor
    fx: float
    fy: float
    cx: float
    cy: float
    height: int
    width: int

    def __post_init__(self):
        self.extrinsics = torch.as_tensor(self.extrinsics, dtype=torch.float64)
        if self.extrinsics.shape != (4, 4):
            raise InvalidArgumentError("extrinsics must be a 4x4 matrix")
        rot = self.extrinsics[:3, :3]
        eye = torch.eye(3, dtype=torch.float64)
        if not torch.allclose(rot.T @ rot, eye, atol=1e-5):
            raise InvalidArgumentError("extrinsic rotation block is not orthonormal")
        if torch.linalg.det(rot) <= 0:
            raise InvalidArgumentError("extrinsic rotation block must have determinant +1")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgumentError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise InvalidArgumentError("principal point must lie inside the image")

    @property
    def resolution(self) -> tuple:
        return (self.height, self.width)

    def rotation(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return self.extrinsics[:3, :3].to(dtype)

    def translation(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return self.extrinsics[:3, 3].to(dtype)

    def center(self) -> torch.Tensor:
        """Camera position in world coordinates."""
        rot = self.extrinsics[:3, :3]
        return -(rot.T @ self.extrinsics[:3, 3])

    @classmethod
    def look_at(
        cls,
        eye: Sequence[float],
        target: Sequence[float],
        fx: float,
        fy: float,
        height: int,
        width: int,
        cx: Optional[float] = None,
        cy: Optional[float] = None,
        up: Sequence[float] = (0.0, 1.0, 0.0),
    ) -> "Camera":
        """Camera at `eye` looking at `target` with world `up` mapped to image up."""
        eye_t = torch.as_tensor(eye, dtype=torch.float64)
        forward = F.normalize(torch.as_tensor(target, dtype=torch.float64) - eye_t, dim=0)
        up_t = torch.as_tensor(up, dtype=torch.float64)
        down = -(up_t - (up_t @ forward) * forward)
        if down.norm() < 1e-9:
            raise InvalidArgumentError("up vector is parallel to the viewing direction")
        down = F.normalize(down, dim=0)
        right = torch.linalg.cross(down, forward)

        extrinsics = torch.eye(4, dtype=torch.float64)
        extrinsics[:3, :3] = torch.stack([right, down, forward])
        extrinsics[:3, 3] = -(extrinsics[:3, :3] @ eye_t)
        return cls(
            extrinsics=extrinsics,
            fx=fx,
            fy=fy,
            cx=(width - 1) / 2 if cx is None else cx,
            cy=(height - 1) / 2 if cy is None else cy,
            height=height,
            width=width,
        )

    def to_record(self) -> CameraRecord:
        return CameraRecord(
            extrinsics=self.extrinsics.tolist(),
            fx=self.fx,
            fy=self.fy,
            cx=self.cx,
            cy=self.cy,
            height=self.height,
            width=self.width,
        )

    @classmethod
    def from_record(cls, record: CameraRecord) -> "Camera":
        return cls(
            extrinsics=torch.tensor(record.extrinsics, dtype=torch.float64),
            fx=record.fx,
            fy=record.fy,
            cx=record.cx,
            cy=record.cy,
            height=record.height,
            width=record.width,
        )
