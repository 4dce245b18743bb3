"""
Procedural toy head and its ray-traced ground truth.

The head is a star-shaped surface around an ellipsoid: in ellipsoid-normalised
coordinates u = x / semi_axes the surface is |u| = 1 + δ(û), where δ adds a
nose bump and the expression field Σ τ_k Y_k(û), Y_k being the eight real
spherical harmonics of degree 1 and 2, attenuated around the eyes. Two
eyeballs sit in the face, pushed back along +z so they protrude partially;
their iris and pupil are discs centred on the gaze direction.

All geometry is evaluated in head space. Rays are moved into head space by the
inverse head pose; the light is fixed in world space.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import torch

from gazesplat.deform.gaze import gaze_to_vector, vector_to_pitchyaw
from gazesplat.deform.pose import HeadPose
from gazesplat.errors import EmptyMaskError, InvalidArgumentError
from gazesplat.gauss.core import Camera

logger = logging.getLogger(__name__)

N_MODES = 8
EXPRESSION_AMPLITUDE = 0.06
MAX_OFFSET = 0.3
EYE_WINDOW = (0.35, 0.6)
MARCH_STEPS = 96
BISECT_STEPS = 24
LEVEL_EPS = 1e-4

LIGHT_DIRECTION = np.array([0.0, 0.4, 1.0]) / np.linalg.norm([0.0, 0.4, 1.0])
AMBIENT = 0.35
DIFFUSE = 0.65

SCLERA = np.array([0.93, 0.92, 0.88])
IRIS_ANGLE = 0.45
PUPIL_ANGLE = 0.2
EDGE = 0.06

MASK_BACKGROUND = 0
MASK_FACE = 1
MASK_EYE = 2


def smoothstep(edge0, edge1, x):
    t = np.clip((x - edge0) / (edge1 - edge0), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def expression_basis(dirs: np.ndarray) -> np.ndarray:
    """Real spherical harmonics of degree 1 and 2, (..., 8), orthonormal on the sphere."""
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    c1 = math.sqrt(3.0 / (4.0 * math.pi))
    c2 = math.sqrt(15.0 / (4.0 * math.pi))
    c20 = math.sqrt(5.0 / (16.0 * math.pi))
    c22 = math.sqrt(15.0 / (16.0 * math.pi))
    return np.stack([
        c1 * y,
        c1 * z,
        c1 * x,
        c2 * x * y,
        c2 * y * z,
        c20 * (3.0 * z * z - 1.0),
        c2 * x * z,
        c22 * (x * x - y * y),
    ], axis=-1)


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), 1e-12)


# ============================================================================
# Head Parameters
# ============================================================================

@dataclass
class ToyHeadParams:
    """Identity of one synthetic head."""

    identity_seed: int
    skin_albedo: np.ndarray
    semi_axes: np.ndarray
    eyeball_centers: np.ndarray
    eye_radius: float
    iris_color: np.ndarray
    pupil_color: np.ndarray
    lip_color: np.ndarray
    brow_color: np.ndarray
    nose_height: float = 0.12
    nose_width: float = 0.14
    eye_directions: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.eye_radius <= 0:
            raise InvalidArgumentError("eye radius must be positive")
        self.eye_directions = _normalize(self.eyeball_centers / self.semi_axes)

    @classmethod
    def from_seed(cls, seed: int) -> "ToyHeadParams":
        """Deterministic, bilaterally symmetric identity for a seed."""
        rng = np.random.default_rng(seed)
        semi_axes = np.array([0.75, 0.95, 0.8]) * rng.uniform(0.95, 1.05, size=3)
        eye_radius = float(rng.uniform(0.12, 0.14))
        ex = float(rng.uniform(0.27, 0.33))
        ey = float(rng.uniform(0.08, 0.16))

        # Eyeball centre: surface point in front of (±ex, ey), pushed back along z.
        u_xy = np.array([ex, ey]) / semi_axes[:2]
        z_surface = semi_axes[2] * math.sqrt(max(1.0 - float(u_xy @ u_xy), 0.05))
        ez = z_surface - 0.5 * eye_radius
        centers = np.array([[-ex, ey, ez], [ex, ey, ez]])

        skin = np.array([0.85, 0.65, 0.52]) * rng.uniform(0.75, 1.1) + rng.uniform(-0.05, 0.05, size=3)
        return cls(
            identity_seed=seed,
            skin_albedo=np.clip(skin, 0.05, 0.95),
            semi_axes=semi_axes,
            eyeball_centers=centers,
            eye_radius=eye_radius,
            iris_color=rng.uniform(0.1, 0.6, size=3),
            pupil_color=np.array([0.04, 0.03, 0.03]),
            lip_color=np.clip(np.array([0.7, 0.3, 0.3]) + rng.uniform(-0.08, 0.08, size=3), 0.0, 1.0),
            brow_color=np.clip(np.array([0.25, 0.17, 0.1]) * rng.uniform(0.6, 1.4), 0.0, 1.0),
            nose_height=float(rng.uniform(0.1, 0.14)),
        )

    # ------------------------------------------------------------------
    # Surface
    # ------------------------------------------------------------------

    def eye_window(self, dirs: np.ndarray) -> np.ndarray:
        """0 around the eyes, 1 away from them."""
        cos = np.clip(dirs @ self.eye_directions.T, -1.0, 1.0)
        angle = np.arccos(cos).min(axis=-1)
        return smoothstep(EYE_WINDOW[0], EYE_WINDOW[1], angle)

    def radial_offset(self, dirs: np.ndarray, tau: Optional[np.ndarray] = None) -> np.ndarray:
        """δ(û) for unit directions in ellipsoid-normalised space."""
        nose_dir = _normalize(np.array([0.0, -0.12, 1.0]))
        nose_angle = np.arccos(np.clip(dirs @ nose_dir, -1.0, 1.0))
        offset = self.nose_height * np.exp(-0.5 * (nose_angle / self.nose_width) ** 2)
        if tau is not None:
            tau = np.asarray(tau, dtype=np.float64)
            if tau.shape[0] > N_MODES:
                raise InvalidArgumentError(f"at most {N_MODES} expression coefficients are supported")
            modes = expression_basis(dirs)[..., : tau.shape[0]]
            offset = offset + EXPRESSION_AMPLITUDE * (modes @ tau) * self.eye_window(dirs)
        return np.clip(offset, -MAX_OFFSET, MAX_OFFSET)

    def surface_points(self, dirs: np.ndarray, tau: Optional[np.ndarray] = None) -> np.ndarray:
        """Head-space surface points along unit directions û."""
        dirs = _normalize(np.asarray(dirs, dtype=np.float64))
        return self.semi_axes * dirs * (1.0 + self.radial_offset(dirs, tau))[..., None]

    def level(self, points: np.ndarray, tau: Optional[np.ndarray] = None) -> np.ndarray:
        """Negative inside the head, positive outside."""
        u = points / self.semi_axes
        r = np.linalg.norm(u, axis=-1)
        dirs = u / np.maximum(r, 1e-12)[..., None]
        return r - (1.0 + self.radial_offset(dirs, tau))

    def surface_normals(self, points: np.ndarray, tau: Optional[np.ndarray] = None) -> np.ndarray:
        grads = []
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = LEVEL_EPS
            grads.append(self.level(points + step, tau) - self.level(points - step, tau))
        return _normalize(np.stack(grads, axis=-1))

    # ------------------------------------------------------------------
    # Appearance
    # ------------------------------------------------------------------

    def face_albedo(self, dirs: np.ndarray) -> np.ndarray:
        """Skin with lips and brows, as a function of the surface direction û."""
        dirs = _normalize(np.asarray(dirs, dtype=np.float64))
        x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
        color = np.broadcast_to(self.skin_albedo, dirs.shape).copy()
        front = (z > 0.0).astype(np.float64)

        lip_d = np.sqrt((x / 0.2) ** 2 + ((y + 0.42) / 0.06) ** 2)
        lip = smoothstep(1.2, 0.8, lip_d) * front
        color = color * (1 - lip[..., None]) + self.lip_color * lip[..., None]

        bx = abs(float(self.eye_directions[1, 0]))
        by = float(self.eye_directions[1, 1]) + 0.2
        brow_d = np.minimum(
            np.sqrt(((x - bx) / 0.13) ** 2 + ((y - by) / 0.035) ** 2),
            np.sqrt(((x + bx) / 0.13) ** 2 + ((y - by) / 0.035) ** 2),
        )
        brow = smoothstep(1.2, 0.8, brow_d) * front
        return color * (1 - brow[..., None]) + self.brow_color * brow[..., None]

    def eye_albedo(self, local_dirs: np.ndarray, gaze: np.ndarray) -> np.ndarray:
        """Sclera / iris / pupil for unit directions from an eyeball centre."""
        angle = np.arccos(np.clip(local_dirs @ gaze, -1.0, 1.0))
        iris = smoothstep(IRIS_ANGLE + EDGE, IRIS_ANGLE - EDGE, angle)[..., None]
        pupil = smoothstep(PUPIL_ANGLE + EDGE, PUPIL_ANGLE - EDGE, angle)[..., None]
        color = SCLERA * (1 - iris) + self.iris_color * iris
        return color * (1 - pupil) + self.pupil_color * pupil


# ============================================================================
# Ground-Truth Samples
# ============================================================================

@dataclass
class ToySample:
    """One rendered frame with its region labels and conditions."""

    image: np.ndarray          # (H, W, 3) float32 in [0, 1]
    labels: np.ndarray         # (H, W) uint8: 0 background, 1 face, 2 eye
    pitch: float
    yaw: float
    pose: HeadPose
    tau: np.ndarray
    camera: Camera
    identity: int = 0

    @property
    def eye_mask(self) -> np.ndarray:
        return self.labels == MASK_EYE

    @property
    def face_mask(self) -> np.ndarray:
        return self.labels == MASK_FACE

    @property
    def head_mask(self) -> np.ndarray:
        return self.labels != MASK_BACKGROUND


def camera_rays(camera: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """World-space origins and unit directions for every pixel centre, (H·W, 3)."""
    rot = camera.extrinsics[:3, :3].numpy()
    center = camera.center().numpy()
    rows, cols = np.meshgrid(np.arange(camera.height), np.arange(camera.width), indexing="ij")
    d_cam = np.stack([
        (cols.reshape(-1) - camera.cx) / camera.fx,
        (rows.reshape(-1) - camera.cy) / camera.fy,
        np.ones(camera.height * camera.width),
    ], axis=-1)
    dirs = _normalize(d_cam @ rot)
    origins = np.broadcast_to(center, dirs.shape)
    return origins, dirs


def _ellipsoid_span(origins, dirs, axes) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    o = origins / axes
    d = dirs / axes
    a = (d * d).sum(-1)
    b = 2.0 * (o * d).sum(-1)
    c = (o * o).sum(-1) - 1.0
    disc = b * b - 4 * a * c
    hit = disc > 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    t0 = (-b - root) / (2 * a)
    t1 = (-b + root) / (2 * a)
    return hit & (t1 > 0), np.maximum(t0, 0.0), t1


def _sphere_hit(origins, dirs, center, radius) -> np.ndarray:
    """Nearest positive hit distance, +inf on miss."""
    oc = origins - center
    b = (oc * dirs).sum(-1)
    c = (oc * oc).sum(-1) - radius * radius
    disc = b * b - c
    root = np.sqrt(np.where(disc > 0, disc, 0.0))
    t = -b - root
    t = np.where(t > 1e-9, t, -b + root)
    return np.where((disc > 0) & (t > 1e-9), t, np.inf)


def _march_head(params: ToyHeadParams, origins, dirs, tau) -> np.ndarray:
    """First crossing of the head level set along each ray, +inf on miss."""
    bound_axes = params.semi_axes * (1.0 + MAX_OFFSET + 0.05)
    valid, t0, t1 = _ellipsoid_span(origins, dirs, bound_axes)
    t_hit = np.full(origins.shape[0], np.inf)
    idx = np.nonzero(valid)[0]
    if idx.size == 0:
        return t_hit

    o = origins[idx]
    d = dirs[idx]
    steps = np.linspace(0.0, 1.0, MARCH_STEPS + 1)
    ts = t0[idx, None] + (t1[idx] - t0[idx])[:, None] * steps[None, :]
    values = params.level(o[:, None, :] + ts[..., None] * d[:, None, :], tau)
    inside = values <= 0.0
    has_hit = inside.any(axis=1)
    first = np.argmax(inside, axis=1)

    rows = np.nonzero(has_hit & (first > 0))[0]
    lo = ts[rows, first[rows] - 1]
    hi = ts[rows, first[rows]]
    o_r = o[rows]
    d_r = d[rows]
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        inside_mid = params.level(o_r + mid[:, None] * d_r, tau) <= 0.0
        hi = np.where(inside_mid, mid, hi)
        lo = np.where(inside_mid, lo, mid)
    t_hit[idx[rows]] = hi
    return t_hit


def render_gt(
    params: ToyHeadParams,
    tau: Sequence[float],
    pose: HeadPose,
    phi: Tuple[float, float],
    camera: Camera,
    identity: int = 0,
) -> ToySample:
    """
    Ray-trace one frame of the toy head.

    `identity` is the dataset index stored on the sample; it does not affect
    the rendering, which depends only on `params`.

    Raises:
        EmptyMaskError: no pixel sees the head
    """
    tau = np.asarray(tau, dtype=np.float64)
    pitch, yaw = float(phi[0]), float(phi[1])
    gaze = gaze_to_vector(pitch, yaw).numpy()

    rot = pose.rotation_matrix().numpy()
    trans = pose.translation.numpy()
    origins_w, dirs_w = camera_rays(camera)
    origins = (origins_w - trans) @ rot
    dirs = dirs_w @ rot
    light = rot.T @ LIGHT_DIRECTION

    t_head = _march_head(params, origins, dirs, tau)
    t_eyes = np.stack([
        _sphere_hit(origins, dirs, center, params.eye_radius) for center in params.eyeball_centers
    ], axis=-1)
    eye_choice = np.argmin(t_eyes, axis=-1)
    t_eye = t_eyes[np.arange(t_eyes.shape[0]), eye_choice]

    n_pixels = origins.shape[0]
    labels = np.zeros(n_pixels, dtype=np.uint8)
    colors = np.zeros((n_pixels, 3))

    head_first = np.isfinite(t_head) & (t_head <= t_eye)
    eye_first = np.isfinite(t_eye) & (t_eye < t_head)

    if head_first.any():
        points = origins[head_first] + t_head[head_first, None] * dirs[head_first]
        normals = params.surface_normals(points, tau)
        albedo = params.face_albedo(points / params.semi_axes)
        shade = AMBIENT + DIFFUSE * np.clip(normals @ light, 0.0, None)
        colors[head_first] = albedo * shade[:, None]
        labels[head_first] = MASK_FACE

    if eye_first.any():
        points = origins[eye_first] + t_eye[eye_first, None] * dirs[eye_first]
        centers = params.eyeball_centers[eye_choice[eye_first]]
        local = (points - centers) / params.eye_radius
        albedo = params.eye_albedo(_normalize(local), gaze)
        shade = AMBIENT + DIFFUSE * np.clip(_normalize(local) @ light, 0.0, None)
        colors[eye_first] = albedo * shade[:, None]
        labels[eye_first] = MASK_EYE

    if not (labels > 0).any():
        raise EmptyMaskError("camera does not see the head")

    shape = (camera.height, camera.width)
    return ToySample(
        image=np.clip(colors, 0.0, 1.0).reshape(*shape, 3).astype(np.float32),
        labels=labels.reshape(shape),
        pitch=pitch,
        yaw=yaw,
        pose=pose,
        tau=tau,
        camera=camera,
        identity=identity,
    )


def _to_camera_facing(vector_world: np.ndarray, camera: Camera) -> torch.Tensor:
    d = camera.extrinsics[:3, :3].numpy() @ vector_world
    return torch.from_numpy(np.array([d[0], -d[1], -d[2]]))


def gaze_in_camera_frame(pitch: float, yaw: float, pose: HeadPose, camera: Camera) -> Tuple[float, float]:
    """
    Head-space gaze → (pitch, yaw) in the camera-facing frame
    (x right, y up, z towards the camera).
    """
    world = pose.rotation_matrix().numpy() @ gaze_to_vector(pitch, yaw).numpy()
    p, y = vector_to_pitchyaw(_to_camera_facing(world, camera))
    return float(p), float(y)


def head_in_camera_frame(pose: HeadPose, camera: Camera) -> Tuple[float, float]:
    """Head forward direction as (pitch, yaw) in the camera-facing frame."""
    p, y = vector_to_pitchyaw(_to_camera_facing(pose.forward_vector().numpy(), camera))
    return float(p), float(y)
