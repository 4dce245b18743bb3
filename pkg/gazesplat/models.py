"""
Pydantic models for run configuration, dataset manifests and reports.
"""

import hashlib
import json
import math
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, Field, field_validator, model_validator

from gazesplat.errors import InvalidConfigurationError


# ============================================================================
# Enumerations
# ============================================================================

class StreamTag(str, Enum):
    """Which Gaussian stream a set belongs to."""
    FACE = "face"
    EYE = "eye"
    HEAD = "head"


class FrameSplit(str, Enum):
    """Per-frame dataset split."""
    TRAIN = "train"
    HELDOUT_FRAME = "heldout_frame"
    HELDOUT_GAZE = "heldout_gaze"


class IdentitySplit(str, Enum):
    """Per-identity dataset split."""
    TRAIN = "train"
    HELDOUT = "heldout"


class OracleRole(str, Enum):
    """Training oracle feeds the gaze loss; evaluation oracle scores reports."""
    TRAINING = "training"
    EVALUATION = "evaluation"


# ============================================================================
# Loss and Ablation Settings
# ============================================================================

class LossWeights(BaseModel):
    """Weights of the image-synthesis and gaze terms."""
    ssim: float = Field(0.1, ge=0.0, description="lambda_SSIM")
    vgg: float = Field(0.1, ge=0.0, description="lambda_VGG (perceptual surrogate)")
    image: float = Field(1.0, ge=0.0, description="lambda_I")
    gaze: float = Field(0.1, ge=0.0, description="lambda_G")


class AblationFlags(BaseModel):
    """Component switches mirroring the component-wise ablation axes."""
    no_two_stream: bool = False
    no_eye_rotation: bool = False
    no_expression_guided: bool = False

    def name(self) -> str:
        enabled = [key for key, value in self.model_dump().items() if value]
        return "+".join(enabled) if enabled else "full"

    @classmethod
    def single_component_variants(cls) -> List["AblationFlags"]:
        """One variant per disabled component."""
        return [cls(**{key: True}) for key in cls.model_fields]


# ============================================================================
# Dataset Configuration and Manifest
# ============================================================================

class DatasetConfig(BaseModel):
    """Procedural synthetic head dataset configuration."""
    n_identities: int = Field(8, ge=1)
    n_frames: int = Field(20, ge=1)
    n_views: int = Field(4, ge=1)
    resolution: int = Field(64, ge=16)
    seed: int = 0

    # Gaze box in radians (head coordinates)
    pitch_range: Tuple[float, float] = (-0.35, 0.35)
    yaw_range: Tuple[float, float] = (-0.5, 0.5)

    # Head pose ranges (radians / scene units, symmetric around zero)
    head_yaw_range: float = Field(0.25, ge=0.0)
    head_pitch_range: float = Field(0.15, ge=0.0)
    head_roll_range: float = Field(0.1, ge=0.0)
    translation_range: float = Field(0.05, ge=0.0)

    # Expression coefficients are drawn uniformly in [-tau_scale, tau_scale]
    tau_dim: int = Field(8, ge=1, le=8)
    tau_scale: float = Field(1.0, ge=0.0)

    # Cameras on a horizontal arc looking at the head centre
    camera_distance: float = Field(3.6, gt=0.0)
    focal: float = Field(110.0, gt=0.0)
    view_spread: float = Field(0.35, ge=0.0)

    # Splits
    heldout_frames: int = Field(4, ge=0)
    n_heldout_identities: int = Field(2, ge=0)
    gaze_grid: int = Field(4, ge=1)
    heldout_gaze_cell: Tuple[int, int] = (1, 2)

    @field_validator("pitch_range", "yaw_range")
    @classmethod
    def check_range(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not low < high:
            raise ValueError("range must be (low, high) with low < high")
        return value

    @model_validator(mode="after")
    def check_label_ranges(self) -> "DatasetConfig":
        if max(abs(v) for v in self.pitch_range) > math.pi / 2:
            raise ValueError("pitch_range must lie within [-pi/2, pi/2]")
        if max(abs(v) for v in self.yaw_range) > math.pi:
            raise ValueError("yaw_range must lie within [-pi, pi]")
        if self.heldout_frames >= self.n_frames:
            raise ValueError("heldout_frames must leave at least one training frame")
        if self.n_heldout_identities >= self.n_identities and self.n_identities > 1:
            raise ValueError("n_heldout_identities must leave at least one training identity")
        row, col = self.heldout_gaze_cell
        if not (0 <= row < self.gaze_grid and 0 <= col < self.gaze_grid):
            raise ValueError("heldout_gaze_cell must index the gaze grid")
        return self

    @property
    def n_samples(self) -> int:
        return self.n_identities * self.n_frames * self.n_views


class CameraRecord(BaseModel):
    """Serialized pinhole camera."""
    extrinsics: List[List[float]]
    fx: float
    fy: float
    cx: float
    cy: float
    height: int
    width: int


class PoseRecord(BaseModel):
    """Serialized head pose (unit quaternion w,x,y,z + translation)."""
    rotation: List[float]
    translation: List[float]


class ManifestRecord(BaseModel):
    """One row of the dataset manifest (JSON lines)."""
    id: int
    frame: int
    view: int
    pitch: float
    yaw: float
    pose: PoseRecord
    tau: List[float]
    camera: CameraRecord
    image: str
    mask: str
    frame_split: FrameSplit
    identity_split: IdentitySplit

    @property
    def key(self) -> str:
        return f"{self.id:03d}_{self.frame:03d}_{self.view:02d}"


# ============================================================================
# Oracle, Training and Evaluation Configuration
# ============================================================================

class OracleConfig(BaseModel):
    """Oracle gaze estimator training configuration."""
    dataset: str
    output_dir: str
    role: OracleRole = OracleRole.TRAINING
    seed: int = 0
    width: int = Field(32, ge=4)
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(1e-3, gt=0.0)
    target_error_deg: float = Field(3.0, gt=0.0)


class TrainConfig(BaseModel):
    """GazeGaussian model training configuration."""
    dataset: str
    output_dir: str
    oracle_dir: Optional[str] = None

    # Optimisation
    lr_init: float = Field(1e-4, gt=0.0)
    lr_final_ratio: float = Field(0.1, gt=0.0, le=1.0)
    epochs: int = Field(20, ge=1)
    batch_frames: int = Field(1, ge=1)
    max_steps: Optional[int] = Field(None, ge=1)
    seed: int = 0
    betas: Tuple[float, float] = (0.9, 0.999)
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    lr_multipliers: Dict[str, float] = Field(
        default_factory=lambda: {
            "centers": 1.0,
            "features": 1.0,
            "rotations": 1.0,
            "scales": 0.5,
            "opacities": 0.5,
            "mlps": 1.0,
            "renderer": 1.0,
            "identity": 1.0,
        }
    )

    # Model sizes
    n_face: int = Field(800, ge=1)
    n_eye: int = Field(200, ge=2)
    n_landmarks: int = Field(24, ge=1)
    feature_dim: int = Field(32, ge=3)
    tau_dim: int = Field(8, ge=1)
    identity_dim: int = Field(8, ge=0)
    mlp_width: int = Field(64, ge=1)
    mlp_depth: int = Field(3, ge=1)
    renderer_width: int = Field(32, ge=4)
    d1: float = Field(0.15, ge=0.0)
    d2: float = Field(0.25, gt=0.0)

    # Rendering
    tile_size: Optional[int] = Field(None, ge=1)

    ablation: AblationFlags = Field(default_factory=AblationFlags)

    @model_validator(mode="after")
    def check_model_sizes(self) -> "TrainConfig":
        if self.n_eye % 2 != 0:
            raise ValueError("n_eye must be even (split across two eyes)")
        if not self.d1 < self.d2:
            raise ValueError("d1 must be smaller than d2")
        return self

    @property
    def condition_dim(self) -> int:
        return self.tau_dim + self.identity_dim


class EvalConfig(BaseModel):
    """Redirection evaluation configuration."""
    checkpoint: str
    dataset: str
    oracle_dir: str
    splits: List[FrameSplit] = Field(
        default_factory=lambda: [FrameSplit.HELDOUT_FRAME, FrameSplit.HELDOUT_GAZE]
    )
    identity_split: Optional[IdentitySplit] = IdentitySplit.TRAIN
    identities: Optional[List[int]] = None
    max_pairs_per_identity: int = Field(100, ge=1)
    include_self_pairs: bool = True
    seed: int = 0


class AugmentConfig(BaseModel):
    """Gaze-estimator augmentation experiment configuration."""
    checkpoint: str
    dataset: str
    oracle_dir: str
    output_dir: str
    identity: Optional[int] = None
    k_real: List[int] = Field(default_factory=lambda: list(range(1, 10)))
    total: int = Field(200, ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    finetune_steps: int = Field(100, ge=1)
    finetune_lr: float = Field(1e-4, gt=0.0)
    identity_fit_steps: int = Field(50, ge=0)

    @field_validator("k_real")
    @classmethod
    def check_k(cls, value: List[int]) -> List[int]:
        if not value or min(value) < 1:
            raise ValueError("k_real must be a non-empty list of positive counts")
        return value


# ============================================================================
# Reports and Manifests
# ============================================================================

class RegionMetrics(BaseModel):
    """Image metrics restricted to one region mask."""
    psnr: float
    ssim: float
    perceptual: float


class EvalReport(BaseModel):
    """Aggregated redirection metrics."""
    gaze_error_deg: float = Field(..., ge=0.0)
    head_error_deg: float = Field(..., ge=0.0)
    psnr: float
    ssim: float
    perceptual: float = Field(..., ge=0.0)
    regions: Dict[str, RegionMetrics] = Field(default_factory=dict)
    n_pairs: int = Field(..., ge=0)
    config_hash: str
    variant: str = "full"


class CheckpointManifest(BaseModel):
    """Manifest stored next to the weight blobs of a checkpoint."""
    format_version: int
    kind: str
    epoch: int = 0
    step: int = 0
    seed: int = 0
    config_hash: str = ""
    config: Dict = Field(default_factory=dict)
    extra: Dict = Field(default_factory=dict)
    blobs: Dict[str, List[Dict]] = Field(default_factory=dict)


class RedirectRequest(BaseModel):
    """HTTP body for POST /redirect."""
    identity: int = 0
    tau: List[float]
    pose: PoseRecord
    camera: CameraRecord
    pitch: float = Field(..., ge=-math.pi / 2, le=math.pi / 2)
    yaw: float = Field(..., ge=-math.pi, le=math.pi)


# ============================================================================
# Helpers
# ============================================================================

ModelT = TypeVar("ModelT", bound=BaseModel)


def config_hash(model: BaseModel) -> str:
    """SHA-256 of the canonical JSON dump of a configuration record."""
    payload = json.dumps(model.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_config(path: Optional[str], model_cls: Type[ModelT], **overrides) -> ModelT:
    """
    Load a configuration record from a JSON file and apply overrides.

    Args:
        path: JSON file whose keys are the record's field names (optional)
        model_cls: Pydantic model class to build
        **overrides: Values that take precedence over the file (None is ignored)

    Returns:
        Validated configuration record
    """
    data: Dict = {}
    if path is not None:
        config_path = Path(path)
        if not config_path.exists():
            raise InvalidConfigurationError(f"Config file not found: {config_path}")
        try:
            data = json.loads(config_path.read_text())
        except json.JSONDecodeError as e:
            raise InvalidConfigurationError(f"Invalid JSON in {config_path}: {e}")
        if not isinstance(data, dict):
            raise InvalidConfigurationError(f"Config {config_path} must be a JSON object")
    data.update({key: value for key, value in overrides.items() if value is not None})
    return model_cls(**data)
