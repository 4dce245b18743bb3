"""
Pitch-yaw gaze convention shared by the dataset, the fields and the oracles.

    v(p, y) = (cos p · sin y,  sin p,  cos p · cos y)

(0, 0) looks along +z (out of the face), positive pitch looks up (+y) and
positive yaw looks towards +x.
"""

from typing import Tuple, Union

import torch

from gazesplat.gauss.core import quat_multiply

Angle = Union[float, torch.Tensor]


def _as_tensor(value: Angle, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    return torch.tensor(value, dtype=dtype)


def gaze_to_vector(pitch: Angle, yaw: Angle) -> torch.Tensor:
    """Unit direction (..., 3) for pitch/yaw angles in radians."""
    pitch = _as_tensor(pitch)
    yaw = _as_tensor(yaw, dtype=pitch.dtype)
    cos_p = torch.cos(pitch)
    return torch.stack([cos_p * torch.sin(yaw), torch.sin(pitch), cos_p * torch.cos(yaw)], dim=-1)


def vector_to_pitchyaw(vector: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Inverse of gaze_to_vector; the input need not be unit length."""
    x, y, z = vector.unbind(-1)
    pitch = torch.atan2(y, torch.sqrt(x * x + z * z))
    yaw = torch.atan2(x, z)
    return pitch, yaw


def axis_angle_quat(axis: int, angle: Angle) -> torch.Tensor:
    """Quaternion (w, x, y, z) for a rotation of `angle` about a coordinate axis."""
    angle = _as_tensor(angle)
    half = 0.5 * angle
    zero = torch.zeros_like(half)
    parts = [torch.cos(half), zero, zero, zero]
    parts[axis + 1] = torch.sin(half)
    return torch.stack(parts, dim=-1)


def gaze_rotation_quat(pitch: Angle, yaw: Angle) -> torch.Tensor:
    """
    Rotation taking +z onto gaze_to_vector(pitch, yaw).

    Composed as R_y(yaw) · R_x(−pitch), so it carries no roll.
    """
    pitch = _as_tensor(pitch)
    yaw = _as_tensor(yaw, dtype=pitch.dtype)
    return quat_multiply(axis_angle_quat(1, yaw), axis_angle_quat(0, -pitch))
