"""
Tests for canonical Gaussian initialisation.
"""

import math

import numpy as np
import pytest
import torch

from gazesplat.deform.pose import HeadPose
from gazesplat.errors import InvalidArgumentError, InvalidConfigurationError
from gazesplat.gauss.core import Camera
from gazesplat.losses.image import psnr
from gazesplat.models import StreamTag
from gazesplat.splat.rasterizer import concat_streams, rasterize
from gazesplat.toyscene.head import ToyHeadParams, render_gt
from gazesplat.trainer.init import EYE_MARGIN, init_canonical, mean_head, sample_canonical

pytestmark = pytest.mark.unit


@pytest.fixture(scope="module")
def neutral() -> ToyHeadParams:
    return mean_head([ToyHeadParams.from_seed(s) for s in (10, 11, 12)])


class TestMeanHead:
    def test_single_head_is_unchanged(self):
        head = ToyHeadParams.from_seed(1)
        avg = mean_head([head])
        assert np.allclose(avg.semi_axes, head.semi_axes)
        assert np.allclose(avg.eyeball_centers, head.eyeball_centers)
        assert avg.eye_radius == pytest.approx(head.eye_radius)

    def test_average_stays_symmetric(self, neutral):
        left, right = neutral.eyeball_centers
        assert left[0] == pytest.approx(-right[0])

    def test_empty_raises(self):
        with pytest.raises(InvalidArgumentError):
            mean_head([])


class TestSampleCanonical:
    """Placement of face and eye Gaussians on the neutral head."""

    def test_counts_and_tags(self, neutral):
        canonical = sample_canonical(neutral, n_face=120, n_eye=40, n_landmarks=10, feature_dim=6)
        assert canonical.face.n == 120 and canonical.face.stream_tag == StreamTag.FACE
        assert canonical.eye.n == 40 and canonical.eye.stream_tag == StreamTag.EYE
        assert canonical.face.scales.shape == (120, 3)
        assert canonical.eye.scales.shape == (40, 1)
        assert canonical.face.feature_dim == canonical.eye.feature_dim == 6
        assert canonical.landmarks.shape == (10, 3)
        assert canonical.eye_index.tolist() == [0] * 20 + [1] * 20

    def test_eye_gaussians_lie_on_their_eyeball(self, neutral):
        canonical = sample_canonical(neutral, n_face=50, n_eye=60, n_landmarks=5, feature_dim=3)
        pivots = canonical.eyeball_centers[canonical.eye_index]
        dist = (canonical.eye.centers - pivots).norm(dim=-1)
        assert float(dist.max()) <= neutral.eye_radius + 1e-5
        assert float(dist.min()) >= neutral.eye_radius - 1e-5
        assert bool((canonical.eye.centers[:, 2] > pivots[:, 2]).all())

    def test_face_gaussians_avoid_the_eyes(self, neutral):
        canonical = sample_canonical(neutral, n_face=300, n_eye=20, n_landmarks=5, feature_dim=3)
        eyes = torch.from_numpy(neutral.eyeball_centers).float()
        dist = (canonical.face.centers[:, None, :] - eyes[None]).norm(dim=-1).min(dim=1).values
        assert float(dist.min()) > EYE_MARGIN * neutral.eye_radius - 1e-5

    def test_landmarks_are_face_points(self, neutral):
        canonical = sample_canonical(neutral, n_face=80, n_eye=20, n_landmarks=12, feature_dim=3)
        matches = (canonical.landmarks[:, None, :] == canonical.face.centers[None]).all(dim=-1)
        assert bool(matches.any(dim=1).all())

    def test_colour_channels_hold_albedo_logits(self, neutral):
        canonical = sample_canonical(neutral, n_face=40, n_eye=20, n_landmarks=4, feature_dim=5)
        rgb = torch.sigmoid(canonical.face.features[:, :3])
        assert float(rgb.min()) >= 0.02 - 1e-6
        assert float(rgb.max()) <= 0.98 + 1e-6

    def test_deterministic_per_seed(self, neutral):
        a = sample_canonical(neutral, n_face=40, n_eye=20, n_landmarks=4, feature_dim=4, seed=3)
        b = sample_canonical(neutral, n_face=40, n_eye=20, n_landmarks=4, feature_dim=4, seed=3)
        c = sample_canonical(neutral, n_face=40, n_eye=20, n_landmarks=4, feature_dim=4, seed=4)
        assert torch.equal(a.face.centers, b.face.centers)
        assert not torch.equal(a.face.centers, c.face.centers)

    @pytest.mark.parametrize(
        "overrides",
        [{"n_eye": 21}, {"feature_dim": 2}, {"n_landmarks": 0}, {"n_landmarks": 500}],
    )
    def test_invalid_sizes_raise(self, neutral, overrides):
        sizes = dict(n_face=100, n_eye=20, n_landmarks=5, feature_dim=4)
        sizes.update(overrides)
        with pytest.raises(InvalidConfigurationError):
            sample_canonical(neutral, **sizes)


class TestInitCanonical:
    """Identity-initialised fields."""

    def test_fields_start_at_identity(self, neutral):
        face_field, eye_field = init_canonical(
            neutral, n_face=60, n_eye=20, n_landmarks=6, feature_dim=4, condition_dim=3,
            hidden_dim=8, hidden_layers=1,
        )
        code = torch.randn(3)
        face = face_field(code, HeadPose.identity().as_vector())
        eye = eye_field(code, 0.0, 0.0)
        assert torch.equal(face.centers, face_field.centers)
        assert torch.allclose(eye.centers, eye_field.centers, atol=1e-6)

    def test_offset_mode(self, neutral):
        _, eye_field = init_canonical(
            neutral, n_face=60, n_eye=20, n_landmarks=6, feature_dim=4, condition_dim=3,
            hidden_dim=8, hidden_layers=1, rotation_mode="offset",
        )
        assert eye_field.rotation_mode == "offset"

    @pytest.mark.slow
    def test_initial_splats_resemble_the_neutral_head(self, neutral):
        camera = Camera.look_at(
            eye=(0.0, 0.0, 3.6), target=(0.0, 0.0, 0.0), fx=55.0, fy=55.0, height=32, width=32,
        )
        truth = render_gt(neutral, np.zeros(8), HeadPose.identity(), (0.0, 0.0), camera)
        target = torch.from_numpy(truth.image)

        face_field, eye_field = init_canonical(
            neutral, n_face=800, n_eye=200, n_landmarks=24, feature_dim=3, condition_dim=2,
            hidden_dim=8, hidden_layers=1,
        )
        code = torch.zeros(2)
        with torch.no_grad():
            head = concat_streams(face_field(code, HeadPose.identity().as_vector()), eye_field(code, 0.0, 0.0))
            splatted = rasterize(head, camera).rgb()

        black = psnr(torch.zeros_like(target), target)
        achieved = psnr(splatted, target)
        assert math.isfinite(achieved)
        assert achieved > black + 3.0
