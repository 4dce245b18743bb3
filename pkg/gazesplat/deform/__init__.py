"""
Face and eye deformation fields, gaze convention and head pose.
"""

from gazesplat.deform.fields import (
    DeformMLP,
    EyeField,
    FaceField,
    FrameCondition,
    deform_face,
    landmark_weights,
    rotate_eyes,
)
from gazesplat.deform.gaze import gaze_rotation_quat, gaze_to_vector, vector_to_pitchyaw
from gazesplat.deform.pose import HeadPose, to_world

__all__ = [
    "DeformMLP",
    "EyeField",
    "FaceField",
    "FrameCondition",
    "HeadPose",
    "deform_face",
    "gaze_rotation_quat",
    "gaze_to_vector",
    "landmark_weights",
    "rotate_eyes",
    "to_world",
    "vector_to_pitchyaw",
]
