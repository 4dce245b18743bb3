"""
Gaussian primitives shared by the face and eye streams.
"""

from gazesplat.gauss.core import (
    Camera,
    GaussianSet,
    covariance,
    gaussian_density,
    normalize_quat,
    quat_conjugate,
    quat_multiply,
    quat_to_rotmat,
)
from gazesplat.gauss.ply import load_ply, save_ply

__all__ = [
    "Camera",
    "GaussianSet",
    "covariance",
    "gaussian_density",
    "load_ply",
    "normalize_quat",
    "quat_conjugate",
    "quat_multiply",
    "quat_to_rotmat",
    "save_ply",
]
