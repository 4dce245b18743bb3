"""
Canonical Gaussian initialisation from the procedural neutral head.

Face Gaussians are scattered over the front of the neutral surface with the
eye openings cut out; eye Gaussians cover the visible cap of each eyeball.
Colour channels start at the logit of the local albedo, the remaining feature
channels at small random values.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import torch

from gazesplat.deform.fields import EyeField, FaceField
from gazesplat.errors import InvalidArgumentError, InvalidConfigurationError
from gazesplat.gauss.core import GaussianSet
from gazesplat.models import StreamTag
from gazesplat.toyscene.head import ToyHeadParams

logger = logging.getLogger(__name__)

# Cameras never see behind the head, so surface samples stay on the front.
FRONT_LIMIT = -0.3
EYE_MARGIN = 1.15
EYE_CAP = 0.3

FACE_SCALE = 0.05
EYE_SCALE = 0.025
INIT_OPACITY = 0.9
EXTRA_FEATURE_STD = 0.1
ALBEDO_CLIP = (0.02, 0.98)


@dataclass
class CanonicalGaussians:
    """Canonical face and eye sets plus the annotations the fields need."""

    face: GaussianSet
    eye: GaussianSet
    landmarks: torch.Tensor
    eyeball_centers: torch.Tensor
    eye_index: torch.Tensor


def mean_head(heads: Sequence[ToyHeadParams]) -> ToyHeadParams:
    """Attribute-wise average of several identities, used as the neutral template."""
    if not heads:
        raise InvalidArgumentError("need at least one head to average")

    def avg(name: str):
        return np.mean([np.asarray(getattr(h, name), dtype=np.float64) for h in heads], axis=0)

    return ToyHeadParams(
        identity_seed=heads[0].identity_seed,
        skin_albedo=avg("skin_albedo"),
        semi_axes=avg("semi_axes"),
        eyeball_centers=avg("eyeball_centers"),
        eye_radius=float(avg("eye_radius")),
        iris_color=avg("iris_color"),
        pupil_color=avg("pupil_color"),
        lip_color=avg("lip_color"),
        brow_color=avg("brow_color"),
        nose_height=float(avg("nose_height")),
        nose_width=float(avg("nose_width")),
    )


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, *ALBEDO_CLIP)
    return np.log(p / (1.0 - p))


def _random_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def _features(rng: np.random.Generator, albedo: np.ndarray, feature_dim: int) -> np.ndarray:
    extra = rng.normal(scale=EXTRA_FEATURE_STD, size=(albedo.shape[0], feature_dim - 3))
    return np.concatenate([_logit(albedo), extra], axis=-1)


def _face_samples(params: ToyHeadParams, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """n front surface points outside the eye openings, and their directions."""
    points, dirs = [], []
    have = 0
    while have < n:
        candidates = _random_directions(rng, 4 * n)
        candidates = candidates[candidates[:, 2] > FRONT_LIMIT]
        surface = params.surface_points(candidates)
        dist = np.linalg.norm(surface[:, None, :] - params.eyeball_centers[None], axis=-1).min(axis=1)
        keep = dist > EYE_MARGIN * params.eye_radius
        points.append(surface[keep])
        dirs.append(candidates[keep])
        have += int(keep.sum())
    return np.concatenate(points)[:n], np.concatenate(dirs)[:n]


def _eye_samples(params: ToyHeadParams, rng: np.random.Generator, per_eye: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Points on the front cap of each eyeball, their local directions and eyeball index."""
    points, local, index = [], [], []
    for eye, center in enumerate(params.eyeball_centers):
        chosen = np.zeros((0, 3))
        while chosen.shape[0] < per_eye:
            candidates = _random_directions(rng, 4 * per_eye)
            chosen = np.concatenate([chosen, candidates[candidates[:, 2] > EYE_CAP]])
        chosen = chosen[:per_eye]
        points.append(center + params.eye_radius * chosen)
        local.append(chosen)
        index.append(np.full(per_eye, eye))
    return np.concatenate(points), np.concatenate(local), np.concatenate(index)


def sample_canonical(
    params: ToyHeadParams,
    n_face: int = 800,
    n_eye: int = 200,
    n_landmarks: int = 24,
    feature_dim: int = 32,
    seed: int = 0,
) -> CanonicalGaussians:
    """
    Sample canonical face / eye Gaussians on the neutral head.

    Raises:
        InvalidConfigurationError: odd n_eye, too few features or landmarks
    """
    if n_eye % 2 != 0:
        raise InvalidConfigurationError(f"n_eye must be even to split across two eyes, got {n_eye}")
    if feature_dim < 3:
        raise InvalidConfigurationError("feature_dim must hold at least the three colour channels")
    if not 1 <= n_landmarks <= n_face:
        raise InvalidConfigurationError("n_landmarks must lie in [1, n_face]")

    rng = np.random.default_rng([seed, params.identity_seed])

    face_points, face_dirs = _face_samples(params, rng, n_face)
    face_features = _features(rng, params.face_albedo(face_dirs), feature_dim)

    eye_points, eye_local, eye_index = _eye_samples(params, rng, n_eye // 2)
    eye_features = _features(rng, params.eye_albedo(eye_local, np.array([0.0, 0.0, 1.0])), feature_dim)

    landmarks = face_points[rng.choice(n_face, size=n_landmarks, replace=False)]

    opacity_logit = float(np.log(INIT_OPACITY / (1.0 - INIT_OPACITY)))
    identity_quat = torch.tensor([1.0, 0.0, 0.0, 0.0])

    def as_tensor(array: np.ndarray) -> torch.Tensor:
        return torch.from_numpy(np.ascontiguousarray(array)).float()

    face = GaussianSet(
        centers=as_tensor(face_points),
        features=as_tensor(face_features),
        rotations=identity_quat.repeat(n_face, 1),
        scales=torch.full((n_face, 3), float(np.log(FACE_SCALE))),
        opacities=torch.full((n_face, 1), opacity_logit),
        stream_tag=StreamTag.FACE,
    )
    eye = GaussianSet(
        centers=as_tensor(eye_points),
        features=as_tensor(eye_features),
        rotations=identity_quat.repeat(n_eye, 1),
        scales=torch.full((n_eye, 1), float(np.log(EYE_SCALE))),
        opacities=torch.full((n_eye, 1), opacity_logit),
        stream_tag=StreamTag.EYE,
    )
    logger.debug(f"Sampled {n_face} face and {n_eye} eye Gaussians, {n_landmarks} landmarks")
    return CanonicalGaussians(
        face=face,
        eye=eye,
        landmarks=as_tensor(landmarks),
        eyeball_centers=as_tensor(params.eyeball_centers),
        eye_index=torch.from_numpy(eye_index).long(),
    )


def init_canonical(
    neutral: ToyHeadParams,
    n_face: int = 800,
    n_eye: int = 200,
    n_landmarks: int = 24,
    feature_dim: int = 32,
    condition_dim: int = 8,
    d1: float = 0.15,
    d2: float = 0.25,
    hidden_dim: int = 64,
    hidden_layers: int = 3,
    rotation_mode: str = "rigid",
    seed: int = 0,
) -> Tuple[FaceField, EyeField]:
    """Identity-initialised two-stream fields on the neutral head."""
    canonical = sample_canonical(neutral, n_face, n_eye, n_landmarks, feature_dim, seed)
    face_field = FaceField(
        canonical.face,
        canonical.landmarks,
        condition_dim,
        d1=d1,
        d2=d2,
        hidden_dim=hidden_dim,
        hidden_layers=hidden_layers,
    )
    eye_field = EyeField(
        canonical.eye,
        canonical.eyeball_centers,
        canonical.eye_index,
        condition_dim,
        rotation_mode=rotation_mode,
        hidden_dim=hidden_dim,
        hidden_layers=hidden_layers,
    )
    return face_field, eye_field
