"""
Synthetic dataset generation and loading.

Layout of a dataset directory:

    dataset.json       generator config, identity seeds, sample count
    manifest.jsonl     one ManifestRecord per (identity, frame, view)
    images/<key>.png   RGB ground truth
    masks/<key>.png    palette PNG: 0 background, 1 face, 2 eye
"""

import json
import logging
import math
import shutil
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
import torch
from PIL import Image

from gazesplat.deform.fields import FrameCondition
from gazesplat.deform.pose import HeadPose
from gazesplat.errors import DatasetExistsError, InvalidArgumentError
from gazesplat.gauss.core import Camera
from gazesplat.models import (
    DatasetConfig,
    FrameSplit,
    IdentitySplit,
    ManifestRecord,
)
from gazesplat.toyscene.head import MASK_EYE, MASK_FACE, ToyHeadParams, render_gt

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
DATASET_META = "dataset.json"
MASK_PALETTE = [0, 0, 0, 128, 128, 128, 255, 255, 255]


def identity_seed(config: DatasetConfig, identity: int) -> int:
    return config.seed * 1000 + identity


def dataset_cameras(config: DatasetConfig) -> List[Camera]:
    """Cameras on a horizontal arc around the head, all looking at the origin."""
    if config.n_views == 1:
        angles = [0.0]
    else:
        angles = np.linspace(-config.view_spread, config.view_spread, config.n_views).tolist()
    return [
        Camera.look_at(
            eye=(config.camera_distance * math.sin(a), 0.0, config.camera_distance * math.cos(a)),
            target=(0.0, 0.0, 0.0),
            fx=config.focal,
            fy=config.focal,
            height=config.resolution,
            width=config.resolution,
        )
        for a in angles
    ]


def gaze_cell(config: DatasetConfig, pitch: float, yaw: float) -> tuple:
    """(row, col) of a gaze in the config's pitch × yaw grid."""
    def bin_of(value: float, bounds) -> int:
        low, high = bounds
        index = int((value - low) / (high - low) * config.gaze_grid)
        return min(max(index, 0), config.gaze_grid - 1)

    return bin_of(pitch, config.pitch_range), bin_of(yaw, config.yaw_range)


def frame_split(config: DatasetConfig, frame: int, pitch: float, yaw: float) -> FrameSplit:
    if frame >= config.n_frames - config.heldout_frames:
        return FrameSplit.HELDOUT_FRAME
    if gaze_cell(config, pitch, yaw) == tuple(config.heldout_gaze_cell):
        return FrameSplit.HELDOUT_GAZE
    return FrameSplit.TRAIN


def sample_frame(config: DatasetConfig, identity: int, frame: int) -> Dict:
    """Per-frame τ, γ and φ drawn from a generator keyed on (seed, identity, frame)."""
    rng = np.random.default_rng([config.seed, identity, frame])
    tau = rng.uniform(-config.tau_scale, config.tau_scale, size=config.tau_dim)
    pose = HeadPose.from_euler(
        yaw=float(rng.uniform(-config.head_yaw_range, config.head_yaw_range)),
        pitch=float(rng.uniform(-config.head_pitch_range, config.head_pitch_range)),
        roll=float(rng.uniform(-config.head_roll_range, config.head_roll_range)),
        translation=rng.uniform(-config.translation_range, config.translation_range, size=3).tolist(),
    )
    pitch = float(rng.uniform(*config.pitch_range))
    yaw = float(rng.uniform(*config.yaw_range))
    return {"tau": tau, "pose": pose, "pitch": pitch, "yaw": yaw}


def _save_mask(labels: np.ndarray, path: Path) -> None:
    height, width = labels.shape
    mask = Image.new("P", (width, height))
    mask.putdata(labels.astype(np.uint8).reshape(-1).tolist())
    mask.putpalette(MASK_PALETTE)
    mask.save(path)


def make_dataset(
    config: DatasetConfig,
    output_dir: Union[str, Path],
    force: bool = False,
) -> Path:
    """
    Render the full synthetic dataset.

    Raises:
        DatasetExistsError: output_dir exists, is non-empty and force is False
    """
    output_dir = Path(output_dir)
    if output_dir.exists() and any(output_dir.iterdir()):
        if not force:
            raise DatasetExistsError(f"Output directory {output_dir} is not empty (use --force)")
        logger.warning(f"Overwriting existing dataset in {output_dir}")
        shutil.rmtree(output_dir)

    (output_dir / "images").mkdir(parents=True, exist_ok=True)
    (output_dir / "masks").mkdir(parents=True, exist_ok=True)

    cameras = dataset_cameras(config)
    heldout_ids = set(range(config.n_identities - config.n_heldout_identities, config.n_identities))
    records: List[ManifestRecord] = []

    for identity in range(config.n_identities):
        params = ToyHeadParams.from_seed(identity_seed(config, identity))
        id_split = IdentitySplit.HELDOUT if identity in heldout_ids else IdentitySplit.TRAIN
        for frame in range(config.n_frames):
            controls = sample_frame(config, identity, frame)
            split = frame_split(config, frame, controls["pitch"], controls["yaw"])
            for view, camera in enumerate(cameras):
                sample = render_gt(
                    params,
                    controls["tau"],
                    controls["pose"],
                    (controls["pitch"], controls["yaw"]),
                    camera,
                    identity=identity,
                )
                key = f"{identity:03d}_{frame:03d}_{view:02d}"
                image_rel = f"images/{key}.png"
                mask_rel = f"masks/{key}.png"
                Image.fromarray(np.round(sample.image * 255.0).astype(np.uint8)).save(output_dir / image_rel)
                _save_mask(sample.labels, output_dir / mask_rel)
                records.append(ManifestRecord(
                    id=identity,
                    frame=frame,
                    view=view,
                    pitch=controls["pitch"],
                    yaw=controls["yaw"],
                    pose=controls["pose"].to_record(),
                    tau=controls["tau"].tolist(),
                    camera=camera.to_record(),
                    image=image_rel,
                    mask=mask_rel,
                    frame_split=split,
                    identity_split=id_split,
                ))
        logger.info(f"Rendered identity {identity + 1}/{config.n_identities}")

    with open(output_dir / MANIFEST_NAME, "w") as handle:
        for record in records:
            handle.write(record.model_dump_json() + "\n")

    meta = {
        "config": config.model_dump(mode="json"),
        "identity_seeds": [identity_seed(config, i) for i in range(config.n_identities)],
        "n_samples": len(records),
    }
    (output_dir / DATASET_META).write_text(json.dumps(meta, indent=2, sort_keys=True))
    logger.info(f"Wrote {len(records)} samples to {output_dir}")
    return output_dir


class ToyDataset:
    """Read access to a generated dataset directory."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        manifest_path = self.root / MANIFEST_NAME
        meta_path = self.root / DATASET_META
        if not manifest_path.exists() or not meta_path.exists():
            raise InvalidArgumentError(f"No dataset found at {self.root}")

        meta = json.loads(meta_path.read_text())
        self.config = DatasetConfig(**meta["config"])
        self.identity_seeds: List[int] = meta["identity_seeds"]
        with open(manifest_path) as handle:
            self.records = [ManifestRecord.model_validate_json(line) for line in handle if line.strip()]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ManifestRecord]:
        return iter(self.records)

    def select(
        self,
        frame_splits: Optional[Sequence[FrameSplit]] = None,
        identity_split: Optional[IdentitySplit] = None,
        identities: Optional[Sequence[int]] = None,
    ) -> List[ManifestRecord]:
        selected = []
        for record in self.records:
            if frame_splits is not None and record.frame_split not in frame_splits:
                continue
            if identity_split is not None and record.identity_split != identity_split:
                continue
            if identities is not None and record.id not in identities:
                continue
            selected.append(record)
        return selected

    def identities(self, split: Optional[IdentitySplit] = None) -> List[int]:
        return sorted({r.id for r in self.records if split is None or r.identity_split == split})

    def head_params(self, identity: int) -> ToyHeadParams:
        return ToyHeadParams.from_seed(self.identity_seeds[identity])

    def image(self, record: ManifestRecord) -> torch.Tensor:
        """H×W×3 float32 image in [0, 1]."""
        with Image.open(self.root / record.image) as img:
            array = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        return torch.from_numpy(array.copy())

    def labels(self, record: ManifestRecord) -> np.ndarray:
        with Image.open(self.root / record.mask) as img:
            return np.asarray(img, dtype=np.uint8).copy()

    def masks(self, record: ManifestRecord) -> Dict[str, torch.Tensor]:
        """Binary float masks for the face-only, eye and head regions."""
        labels = torch.from_numpy(self.labels(record))
        return {
            "face": (labels == MASK_FACE).float(),
            "eye": (labels == MASK_EYE).float(),
            "head": (labels != 0).float(),
        }

    def condition(self, record: ManifestRecord) -> FrameCondition:
        return FrameCondition(
            tau=torch.tensor(record.tau, dtype=torch.float32),
            pose=HeadPose.from_record(record.pose),
            pitch=record.pitch,
            yaw=record.yaw,
            camera=Camera.from_record(record.camera),
            identity=record.id,
        )
