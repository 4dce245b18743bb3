"""
Tests for the procedural head and its ray-traced ground truth.
"""

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from gazesplat.deform.gaze import gaze_to_vector
from gazesplat.deform.pose import HeadPose
from gazesplat.errors import EmptyMaskError, InvalidArgumentError
from gazesplat.gauss.core import Camera
from gazesplat.toyscene.head import (
    MASK_BACKGROUND,
    MASK_EYE,
    MASK_FACE,
    ToyHeadParams,
    expression_basis,
    gaze_in_camera_frame,
    head_in_camera_frame,
    render_gt,
)

pytestmark = pytest.mark.unit

TAU_ZERO = np.zeros(8)


def frontal_camera(size: int = 48, focal: float = 80.0, distance: float = 3.6) -> Camera:
    return Camera.look_at(
        eye=(0.0, 0.0, distance), target=(0.0, 0.0, 0.0), fx=focal, fy=focal, height=size, width=size,
    )


def project(camera: Camera, point: np.ndarray) -> np.ndarray:
    rot = camera.extrinsics[:3, :3].numpy()
    cam = rot @ point + camera.extrinsics[:3, 3].numpy()
    return np.array([camera.fx * cam[0] / cam[2] + camera.cx, camera.fy * cam[1] / cam[2] + camera.cy])


def dilate(mask: np.ndarray, pixels: int) -> np.ndarray:
    t = torch.from_numpy(mask.astype(np.float32))[None, None]
    grown = F.max_pool2d(t, kernel_size=2 * pixels + 1, stride=1, padding=pixels)
    return grown[0, 0].numpy() > 0


class TestToyHeadParams:
    """Identity parameters."""

    def test_from_seed_is_deterministic(self):
        a, b = ToyHeadParams.from_seed(3), ToyHeadParams.from_seed(3)
        assert np.array_equal(a.semi_axes, b.semi_axes)
        assert np.array_equal(a.iris_color, b.iris_color)

    def test_seeds_differ(self):
        assert not np.array_equal(ToyHeadParams.from_seed(1).semi_axes, ToyHeadParams.from_seed(2).semi_axes)

    def test_eyes_are_mirrored(self):
        params = ToyHeadParams.from_seed(4)
        left, right = params.eyeball_centers
        assert left[0] == -right[0]
        assert left[1] == right[1] and left[2] == right[2]

    def test_eyeballs_protrude_from_the_face(self):
        params = ToyHeadParams.from_seed(5)
        apex = params.eyeball_centers + params.eye_radius * np.array([0.0, 0.0, 1.0])
        centers_level = params.level(params.eyeball_centers, TAU_ZERO)
        apex_level = params.level(apex, TAU_ZERO)
        assert (centers_level < 0).all()
        assert (apex_level > 0).all()

    def test_expression_basis_is_orthonormal(self):
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(200000, 3))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        basis = expression_basis(dirs)
        gram = 4.0 * np.pi * basis.T @ basis / dirs.shape[0]
        assert np.abs(gram - np.eye(8)).max() < 0.05

    def test_too_many_expression_coefficients_raise(self):
        with pytest.raises(InvalidArgumentError):
            ToyHeadParams.from_seed(0).radial_offset(np.array([[0.0, 0.0, 1.0]]), np.zeros(9))

    def test_pupil_albedo_is_dark(self):
        params = ToyHeadParams.from_seed(0)
        gaze = np.array([0.0, 0.0, 1.0])
        assert np.allclose(params.eye_albedo(gaze[None], gaze)[0], params.pupil_color)


# ============================================================================
# Ground Truth Rendering
# ============================================================================

class TestRenderGt:
    """Ray-traced frames and labels."""

    def test_labels_partition_the_image(self):
        sample = render_gt(ToyHeadParams.from_seed(0), TAU_ZERO, HeadPose.identity(), (0.0, 0.0), frontal_camera())
        assert sample.image.shape == (48, 48, 3)
        assert sample.image.dtype == np.float32
        assert set(np.unique(sample.labels)) == {MASK_BACKGROUND, MASK_FACE, MASK_EYE}
        total = sample.face_mask.astype(int) + sample.eye_mask.astype(int) + (sample.labels == 0).astype(int)
        assert (total == 1).all()
        assert np.array_equal(sample.head_mask, sample.face_mask | sample.eye_mask)
        assert not sample.image[sample.labels == MASK_BACKGROUND].any()

    def test_sample_carries_the_dataset_identity(self):
        params = ToyHeadParams.from_seed(1234)
        default = render_gt(params, TAU_ZERO, HeadPose.identity(), (0.0, 0.0), frontal_camera())
        tagged = render_gt(params, TAU_ZERO, HeadPose.identity(), (0.0, 0.0), frontal_camera(), identity=2)
        assert default.identity == 0
        assert tagged.identity == 2
        assert np.array_equal(default.image, tagged.image)

    def test_frontal_frame_is_mirror_symmetric(self):
        sample = render_gt(ToyHeadParams.from_seed(1), TAU_ZERO, HeadPose.identity(), (0.0, 0.0), frontal_camera())
        assert np.abs(sample.image - sample.image[:, ::-1]).mean() < 1e-3
        assert (sample.labels != sample.labels[:, ::-1]).mean() < 0.01

    @pytest.mark.slow
    @pytest.mark.parametrize("phi", [(0.0, 0.0), (0.0, 0.2), (0.15, -0.1)])
    def test_pupil_centroid_matches_projected_gaze(self, phi):
        params = ToyHeadParams.from_seed(2)
        camera = frontal_camera(size=128, focal=480.0)
        sample = render_gt(params, TAU_ZERO, HeadPose.identity(), phi, camera)

        dark = sample.eye_mask & (sample.image.max(axis=-1) < 0.06)
        gaze = gaze_to_vector(*phi).numpy()
        cols = np.arange(128)[None, :].repeat(128, axis=0)
        for center in params.eyeball_centers:
            apex = project(camera, center + params.eye_radius * gaze)
            near = dark & (np.hypot(cols - apex[0], np.arange(128)[:, None] - apex[1]) < 15)
            assert near.sum() > 5
            rows, cs = np.nonzero(near)
            centroid = np.array([cs.mean(), rows.mean()])
            assert np.hypot(*(centroid - apex)) < 1.0

    def test_gaze_only_changes_eye_pixels(self):
        params = ToyHeadParams.from_seed(3)
        camera = frontal_camera()
        a = render_gt(params, TAU_ZERO, HeadPose.identity(), (0.0, 0.0), camera)
        b = render_gt(params, TAU_ZERO, HeadPose.identity(), (0.2, -0.3), camera)

        changed = np.abs(a.image - b.image).max(axis=-1) > 0
        assert changed.any()
        assert not (changed & ~dilate(a.eye_mask | b.eye_mask, 2)).any()

    def test_expression_leaves_visible_eye_pixels_unchanged(self):
        params = ToyHeadParams.from_seed(4)
        camera = frontal_camera()
        tau_b = np.linspace(-1.0, 1.0, 8)
        a = render_gt(params, TAU_ZERO, HeadPose.identity(), (0.1, 0.1), camera)
        b = render_gt(params, tau_b, HeadPose.identity(), (0.1, 0.1), camera)

        assert not np.array_equal(a.image, b.image)
        both_eye = a.eye_mask & b.eye_mask
        assert both_eye.any()
        assert np.array_equal(a.image[both_eye], b.image[both_eye])

    def test_head_pose_moves_the_head(self):
        params = ToyHeadParams.from_seed(5)
        camera = frontal_camera()
        a = render_gt(params, TAU_ZERO, HeadPose.identity(), (0.0, 0.0), camera)
        shifted = HeadPose(rotation=[1.0, 0.0, 0.0, 0.0], translation=[0.3, 0.0, 0.0])
        b = render_gt(params, TAU_ZERO, shifted, (0.0, 0.0), camera)
        cols = np.arange(48)[None, :]
        mean_a = (a.head_mask * cols).sum() / a.head_mask.sum()
        mean_b = (b.head_mask * cols).sum() / b.head_mask.sum()
        assert mean_b > mean_a + 3

    def test_camera_looking_away_raises(self):
        camera = Camera.look_at(eye=(0.0, 0.0, 3.6), target=(0.0, 0.0, 10.0), fx=80.0, fy=80.0, height=16, width=16)
        with pytest.raises(EmptyMaskError):
            render_gt(ToyHeadParams.from_seed(0), TAU_ZERO, HeadPose.identity(), (0.0, 0.0), camera)

    def test_deterministic(self):
        params = ToyHeadParams.from_seed(6)
        pose = HeadPose.from_euler(0.1, -0.05, 0.02)
        a = render_gt(params, np.full(8, 0.3), pose, (0.1, 0.2), frontal_camera(size=24, focal=40.0))
        b = render_gt(params, np.full(8, 0.3), pose, (0.1, 0.2), frontal_camera(size=24, focal=40.0))
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.labels, b.labels)


class TestCameraFacingFrame:
    """Labels as seen from the camera."""

    def test_frontal_identity_pose_keeps_head_space_gaze(self):
        camera = frontal_camera()
        pitch, yaw = gaze_in_camera_frame(0.2, -0.3, HeadPose.identity(), camera)
        assert pitch == pytest.approx(0.2, abs=1e-9)
        assert yaw == pytest.approx(-0.3, abs=1e-9)
        assert head_in_camera_frame(HeadPose.identity(), camera) == pytest.approx((0.0, 0.0), abs=1e-9)

    def test_head_yaw_adds_to_gaze_yaw(self):
        camera = frontal_camera()
        pose = HeadPose.from_euler(yaw=0.2, pitch=0.0, roll=0.0)
        _, yaw = gaze_in_camera_frame(0.0, 0.1, pose, camera)
        assert yaw == pytest.approx(0.3, abs=1e-9)
        assert head_in_camera_frame(pose, camera)[1] == pytest.approx(0.2, abs=1e-9)
