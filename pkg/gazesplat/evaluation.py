"""
Gaze redirection and the evaluation harness.

Every (input, target) pair of one identity is redirected: the input's
expression and identity are kept, the target's gaze, head pose and camera are
applied, and the render is scored against the target ground truth. Gaze and
head errors always come from the evaluation oracle.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import torch

from gazesplat.deform.fields import FrameCondition
from gazesplat.deform.gaze import gaze_to_vector
from gazesplat.errors import InvalidArgumentError
from gazesplat.losses.gaze import angular_error
from gazesplat.losses.image import REGIONS, default_extractor, perceptual, psnr, ssim
from gazesplat.models import EvalConfig, EvalReport, ManifestRecord, OracleRole, RegionMetrics, config_hash
from gazesplat.toyscene.dataset import ToyDataset
from gazesplat.toyscene.oracle import GazeOracle, load_oracle, record_targets
from gazesplat.trainer.loop import load_model
from gazesplat.trainer.model import GazeGaussianModel

logger = logging.getLogger(__name__)

# Reported PSNR values are capped so identical pairs stay finite in JSON.
PSNR_CAP = 100.0


# ============================================================================
# Redirection
# ============================================================================

def redirect(model: GazeGaussianModel, condition: FrameCondition, pitch: float, yaw: float) -> torch.Tensor:
    """Head image of `condition` with the gaze replaced by (pitch, yaw)."""
    with torch.no_grad():
        return model.render_head(condition.with_gaze(pitch, yaw))


def warn_if_outside(pitch: float, yaw: float, pitch_range: Sequence[float], yaw_range: Sequence[float]) -> bool:
    """Log a warning for gazes outside the trained box; returns True if outside."""
    outside = not (pitch_range[0] <= pitch <= pitch_range[1] and yaw_range[0] <= yaw <= yaw_range[1])
    if outside:
        logger.warning(
            f"Target gaze ({pitch:.3f}, {yaw:.3f}) lies outside the trained range "
            f"pitch {tuple(pitch_range)}, yaw {tuple(yaw_range)}"
        )
    return outside


def gaze_sweep(
    model: GazeGaussianModel,
    condition: FrameCondition,
    n_frames: int,
    yaw_range: Sequence[float],
    pitch: Optional[float] = None,
) -> List[torch.Tensor]:
    """Frames over evenly spaced yaw values at a fixed pitch."""
    if n_frames < 1:
        raise InvalidArgumentError("a sweep needs at least one frame")
    pitch = condition.pitch if pitch is None else pitch
    yaws = np.linspace(yaw_range[0], yaw_range[1], n_frames)
    return [redirect(model, condition, pitch, float(yaw)) for yaw in yaws]


def redirected_condition(source: FrameCondition, target: FrameCondition) -> FrameCondition:
    """Source expression and identity under the target's gaze, pose and camera."""
    return FrameCondition(
        tau=source.tau,
        pose=target.pose,
        pitch=target.pitch,
        yaw=target.yaw,
        camera=target.camera,
        identity=source.identity,
    )


class Redirector(Protocol):
    """Produces the redirected H×W×3 image for an (input, target) pair."""

    def __call__(self, source: ManifestRecord, target: ManifestRecord) -> torch.Tensor:
        ...


class ModelRedirector:
    """Redirects with a trained GazeGaussian model."""

    def __init__(self, model: GazeGaussianModel, dataset: ToyDataset):
        self.model = model
        self.dataset = dataset

    def __call__(self, source: ManifestRecord, target: ManifestRecord) -> torch.Tensor:
        condition = redirected_condition(self.dataset.condition(source), self.dataset.condition(target))
        with torch.no_grad():
            return self.model.render_head(condition)


class GroundTruthRedirector:
    """Perfect generator: returns the target's ground-truth image."""

    def __init__(self, dataset: ToyDataset):
        self.dataset = dataset

    def __call__(self, source: ManifestRecord, target: ManifestRecord) -> torch.Tensor:
        return self.dataset.image(target)


# ============================================================================
# Pairing
# ============================================================================

def make_pairs(
    dataset: ToyDataset,
    config: EvalConfig,
) -> List[Tuple[ManifestRecord, ManifestRecord]]:
    """
    Ordered (input, target) pairs within each identity, capped per identity
    by seeded subsampling.

    Raises:
        InvalidArgumentError: the selection yields no pairs
    """
    records = dataset.select(config.splits, config.identity_split, config.identities)
    by_identity: Dict[int, List[ManifestRecord]] = {}
    for record in records:
        by_identity.setdefault(record.id, []).append(record)

    generator = torch.Generator().manual_seed(config.seed)
    pairs: List[Tuple[ManifestRecord, ManifestRecord]] = []
    for identity in sorted(by_identity):
        group = by_identity[identity]
        candidates = [
            (a, b) for a in group for b in group
            if config.include_self_pairs or a.key != b.key
        ]
        if len(candidates) > config.max_pairs_per_identity:
            chosen = torch.randperm(len(candidates), generator=generator)[: config.max_pairs_per_identity]
            candidates = [candidates[i] for i in sorted(chosen.tolist())]
        pairs.extend(candidates)

    if not pairs:
        raise InvalidArgumentError(
            f"no evaluation pairs for splits {[s.value for s in config.splits]}"
        )
    return pairs


# ============================================================================
# Metrics
# ============================================================================

@dataclass
class PairMetrics:
    gaze_error_deg: float
    head_error_deg: float
    psnr: float
    ssim: float
    perceptual: float
    regions: Dict[str, Tuple[float, float, float]]


def _capped_psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    return min(psnr(a, b), PSNR_CAP)


@torch.no_grad()
def score_pair(
    image: torch.Tensor,
    target: ManifestRecord,
    dataset: ToyDataset,
    oracle: GazeOracle,
) -> PairMetrics:
    """Oracle errors and image metrics of one redirected image."""
    truth = dataset.image(target)
    labels = record_targets(target)
    batch = image.unsqueeze(0).to(torch.float32)

    gaze_error = angular_error(oracle.gaze_vectors(batch)[0], gaze_to_vector(labels[0], labels[1]))
    head_error = angular_error(oracle.head_vectors(batch)[0], gaze_to_vector(labels[2], labels[3]))

    extractor = default_extractor(image.dtype)
    regions: Dict[str, Tuple[float, float, float]] = {}
    for region, mask in dataset.masks(target).items():
        if float(mask.sum()) == 0.0:
            continue
        m = mask.to(image.dtype).unsqueeze(-1)
        a, b = image * m, truth.to(image.dtype) * m
        regions[region] = (_capped_psnr(a, b), float(ssim(a, b)), float(perceptual(a, b, extractor)))

    truth = truth.to(image.dtype)
    return PairMetrics(
        gaze_error_deg=math.degrees(float(gaze_error)),
        head_error_deg=math.degrees(float(head_error)),
        psnr=_capped_psnr(image, truth),
        ssim=float(ssim(image, truth)),
        perceptual=float(perceptual(image, truth, extractor)),
        regions=regions,
    )


def aggregate(metrics: Sequence[PairMetrics], config_digest: str, variant: str = "full") -> EvalReport:
    """Average pair metrics in index order."""
    n = len(metrics)

    def mean(values: Sequence[float]) -> float:
        return float(sum(values) / len(values)) if values else 0.0

    regions = {}
    for region in REGIONS:
        rows = [m.regions[region] for m in metrics if region in m.regions]
        if rows:
            regions[region] = RegionMetrics(
                psnr=mean([r[0] for r in rows]),
                ssim=mean([r[1] for r in rows]),
                perceptual=mean([r[2] for r in rows]),
            )
    return EvalReport(
        gaze_error_deg=mean([m.gaze_error_deg for m in metrics]),
        head_error_deg=mean([m.head_error_deg for m in metrics]),
        psnr=mean([m.psnr for m in metrics]),
        ssim=mean([m.ssim for m in metrics]),
        perceptual=mean([m.perceptual for m in metrics]),
        regions=regions,
        n_pairs=n,
        config_hash=config_digest,
        variant=variant,
    )


def evaluate(
    config: EvalConfig,
    redirector: Optional[Redirector] = None,
    oracle: Optional[GazeOracle] = None,
) -> EvalReport:
    """
    Redirect every evaluation pair and score it with the evaluation oracle.

    Without an explicit redirector the checkpoint in `config.checkpoint` is
    loaded.
    """
    dataset = ToyDataset(config.dataset)
    pairs = make_pairs(dataset, config)
    oracle = oracle if oracle is not None else load_oracle(config.oracle_dir, OracleRole.EVALUATION)

    variant = "ground_truth"
    if redirector is None:
        model, train_config = load_model(config.checkpoint)
        redirector = ModelRedirector(model, dataset)
        variant = train_config.ablation.name()

    logger.info(f"Evaluating {variant} on {len(pairs)} pairs")
    metrics = [score_pair(redirector(source, target), target, dataset, oracle) for source, target in pairs]
    report = aggregate(metrics, config_hash(config), variant)
    logger.info(
        f"gaze {report.gaze_error_deg:.3f} deg, head {report.head_error_deg:.3f} deg, "
        f"PSNR {report.psnr:.2f} dB, SSIM {report.ssim:.4f}"
    )
    return report


# ============================================================================
# Reporting
# ============================================================================

def format_report(report: EvalReport) -> str:
    """Aligned text table of one report."""
    rows = [
        ("variant", report.variant),
        ("pairs", str(report.n_pairs)),
        ("gaze error (deg)", f"{report.gaze_error_deg:.3f}"),
        ("head error (deg)", f"{report.head_error_deg:.3f}"),
        ("PSNR (dB)", f"{report.psnr:.2f}"),
        ("SSIM", f"{report.ssim:.4f}"),
        ("perceptual", f"{report.perceptual:.4f}"),
    ]
    for region, metrics in report.regions.items():
        rows.append((
            f"{region} PSNR / SSIM / perceptual",
            f"{metrics.psnr:.2f} / {metrics.ssim:.4f} / {metrics.perceptual:.4f}",
        ))
    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label.ljust(width)}  {value}" for label, value in rows)


def format_comparison(reports: Sequence[EvalReport]) -> str:
    """One row per report: variant, gaze, head, PSNR, SSIM, perceptual."""
    header = ("variant", "gaze", "head", "PSNR", "SSIM", "perceptual")
    rows = [header] + [
        (
            r.variant,
            f"{r.gaze_error_deg:.3f}",
            f"{r.head_error_deg:.3f}",
            f"{r.psnr:.2f}",
            f"{r.ssim:.4f}",
            f"{r.perceptual:.4f}",
        )
        for r in reports
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows)
