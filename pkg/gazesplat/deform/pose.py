"""
Rigid head pose γ and the canonical → world transform.
"""

from dataclasses import dataclass
from typing import Sequence, Union

import torch

from gazesplat.deform.gaze import axis_angle_quat
from gazesplat.errors import InvalidArgumentError
from gazesplat.gauss.core import (
    GaussianSet,
    normalize_quat,
    quat_conjugate,
    quat_multiply,
    quat_to_rotmat,
)
from gazesplat.models import PoseRecord


@dataclass
class HeadPose:
    """Unit quaternion (w, x, y, z) plus translation in scene units."""

    rotation: torch.Tensor
    translation: torch.Tensor

    def __post_init__(self):
        self.rotation = torch.as_tensor(self.rotation, dtype=torch.float64)
        self.translation = torch.as_tensor(self.translation, dtype=torch.float64)
        if self.rotation.shape != (4,) or self.translation.shape != (3,):
            raise InvalidArgumentError("pose needs a 4-quaternion and a 3-translation")
        if not torch.isfinite(self.rotation).all() or not torch.isfinite(self.translation).all():
            raise InvalidArgumentError("pose contains non-finite values")
        norm = self.rotation.norm()
        if norm <= 1e-12:
            raise InvalidArgumentError("pose quaternion norm must exceed 1e-12")
        self.rotation = self.rotation / norm

    @classmethod
    def identity(cls) -> "HeadPose":
        return cls(
            rotation=torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64),
            translation=torch.zeros(3, dtype=torch.float64),
        )

    @classmethod
    def from_euler(
        cls,
        yaw: float,
        pitch: float,
        roll: float,
        translation: Sequence[float] = (0.0, 0.0, 0.0),
    ) -> "HeadPose":
        """
        Pose from head angles, composed as R_y(yaw) · R_x(−pitch) · R_z(roll).

        The head's forward axis then points along gaze_to_vector(pitch, yaw).
        """
        q = quat_multiply(
            quat_multiply(axis_angle_quat(1, yaw), axis_angle_quat(0, -pitch)),
            axis_angle_quat(2, roll),
        )
        return cls(rotation=q, translation=torch.as_tensor(translation, dtype=torch.float64))

    def rotation_matrix(self, dtype: torch.dtype = torch.float64) -> torch.Tensor:
        return quat_to_rotmat(self.rotation).to(dtype)

    def inverse(self) -> "HeadPose":
        inv_rot = quat_conjugate(self.rotation)
        return HeadPose(
            rotation=inv_rot,
            translation=-(quat_to_rotmat(inv_rot) @ self.translation),
        )

    def forward_vector(self) -> torch.Tensor:
        """World direction of the head's +z axis."""
        return self.rotation_matrix()[:, 2]

    def as_vector(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        """7-vector (quaternion, translation) used as the pose-branch input."""
        return torch.cat([self.rotation, self.translation]).to(dtype)

    def to_record(self) -> PoseRecord:
        return PoseRecord(rotation=self.rotation.tolist(), translation=self.translation.tolist())

    @classmethod
    def from_record(cls, record: PoseRecord) -> "HeadPose":
        return cls(
            rotation=torch.tensor(record.rotation, dtype=torch.float64),
            translation=torch.tensor(record.translation, dtype=torch.float64),
        )


def to_world(gaussians: GaussianSet, pose: Union[HeadPose, None]) -> GaussianSet:
    """
    Move a canonical-space set into world space.

    Centers are rotated then translated by γ; quaternions are left-composed
    with γ's rotation. Scales, opacities and features pass through unchanged.
    """
    if pose is None:
        return gaussians
    dtype = gaussians.dtype
    rot = pose.rotation_matrix(dtype)
    q_pose = normalize_quat(pose.rotation.to(dtype))
    return GaussianSet(
        centers=gaussians.centers @ rot.T + pose.translation.to(dtype),
        features=gaussians.features,
        rotations=quat_multiply(q_pose.expand_as(gaussians.rotations), gaussians.rotations),
        scales=gaussians.scales,
        opacities=gaussians.opacities,
        stream_tag=gaussians.stream_tag,
    )
