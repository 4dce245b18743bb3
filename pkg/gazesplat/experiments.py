"""
Ablation runs and the gaze-estimator augmentation experiment.

The augmentation experiment fine-tunes fresh copies of the training oracle on
one held-out identity: k real samples plus (total − k) samples redirected by
the GazeGaussian model, against a real-only baseline on the same k samples.
Gaze error is measured on that identity's remaining real samples.
"""

import copy
import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from gazesplat.deform.fields import FrameCondition
from gazesplat.errors import InvalidArgumentError
from gazesplat.evaluation import evaluate, format_comparison, redirect
from gazesplat.models import AblationFlags, AugmentConfig, EvalConfig, EvalReport, IdentitySplit, OracleRole, TrainConfig
from gazesplat.toyscene.dataset import ToyDataset
from gazesplat.toyscene.head import gaze_in_camera_frame, head_in_camera_frame
from gazesplat.toyscene.oracle import finetune_oracle, load_batch, load_oracle, mean_gaze_error_deg
from gazesplat.trainer.loop import fit_identity, load_frames, load_model, train

logger = logging.getLogger(__name__)


# ============================================================================
# Ablation
# ============================================================================

def ablate(
    base: TrainConfig,
    eval_template: EvalConfig,
    variants: Optional[Sequence[AblationFlags]] = None,
) -> List[EvalReport]:
    """
    Train and evaluate the full model and each ablation variant.

    Each variant trains into `<base.output_dir>/<variant name>`; the returned
    reports start with the full model.
    """
    variants = list(variants) if variants is not None else AblationFlags.single_component_variants()
    runs = [AblationFlags()] + [v for v in variants if v != AblationFlags()]
    root = Path(base.output_dir)
    reports = []
    for flags in runs:
        name = flags.name()
        output_dir = root / name
        logger.info(f"Ablation variant: {name}")
        result = train(base.model_copy(update={"ablation": flags, "output_dir": str(output_dir)}))
        report = evaluate(eval_template.model_copy(update={"checkpoint": str(result.checkpoints[-1])}))
        (output_dir / "report.json").write_text(report.model_dump_json(indent=2))
        reports.append(report)

    (root / "ablation.json").write_text(json.dumps([r.model_dump(mode="json") for r in reports], indent=2))
    (root / "ablation.txt").write_text(format_comparison(reports) + "\n")
    full = reports[0]
    for report in reports[1:]:
        verdict = "holds" if full.gaze_error_deg <= report.gaze_error_deg else "violated"
        logger.info(f"full <= {report.variant} on gaze error: {verdict}")
    return reports


# ============================================================================
# Augmentation Experiment
# ============================================================================

@dataclass
class AugmentRow:
    seed: int
    k_real: int
    n_generated: int
    error_augmented_deg: float
    error_real_only_deg: float

    @property
    def delta_deg(self) -> float:
        return self.error_augmented_deg - self.error_real_only_deg


def _generated_samples(
    model,
    conditions: Sequence[FrameCondition],
    n: int,
    pitch_range: Sequence[float],
    yaw_range: Sequence[float],
    rng: np.random.Generator,
):
    """n redirected images with uniform random target gazes and their oracle labels."""
    images, targets = [], []
    for _ in range(n):
        source = conditions[int(rng.integers(len(conditions)))]
        pitch = float(rng.uniform(*pitch_range))
        yaw = float(rng.uniform(*yaw_range))
        images.append(redirect(model, source, pitch, yaw).to(torch.float32))
        gaze = gaze_in_camera_frame(pitch, yaw, source.pose, source.camera)
        head = head_in_camera_frame(source.pose, source.camera)
        targets.append(torch.tensor([gaze[0], gaze[1], head[0], head[1]], dtype=torch.float32))
    return torch.stack(images), torch.stack(targets)


def augment_experiment(config: AugmentConfig) -> List[AugmentRow]:
    """
    Run the augmentation sweep over k_real × seeds and write CSV + JSON.

    Raises:
        InvalidArgumentError: a k exceeds the identity's real samples (one
            sample is always kept for testing) or exceeds `total`
    """
    dataset = ToyDataset(config.dataset)
    model, train_config = load_model(config.checkpoint)
    oracle = load_oracle(config.oracle_dir, OracleRole.TRAINING)

    identity = config.identity
    if identity is None:
        heldout = dataset.identities(IdentitySplit.HELDOUT)
        identity = heldout[0] if heldout else dataset.identities()[-1]
    pool = dataset.select(identities=[identity])
    max_k = max(config.k_real)
    if max_k > config.total:
        raise InvalidArgumentError(f"k_real {max_k} exceeds total {config.total}")
    if max_k >= len(pool):
        raise InvalidArgumentError(
            f"k_real {max_k} needs more than the {len(pool)} real samples of identity {identity}"
        )

    pitch_range = dataset.config.pitch_range
    yaw_range = dataset.config.yaw_range
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"Augmentation experiment on identity {identity}: k {config.k_real}, seeds {config.seeds}")

    rows: List[AugmentRow] = []
    for seed in config.seeds:
        order = torch.randperm(len(pool), generator=torch.Generator().manual_seed(seed)).tolist()
        shuffled = [pool[i] for i in order]
        test_images, test_targets = load_batch(dataset, shuffled[max_k:])
        for k in config.k_real:
            real = shuffled[:k]
            real_images, real_targets = load_batch(dataset, real)

            fitted = fit_identity(
                copy.deepcopy(model),
                load_frames(dataset, real),
                train_config,
                steps=config.identity_fit_steps,
                seed=seed,
            )
            rng = np.random.default_rng([seed, k])
            conditions = [dataset.condition(r) for r in real]
            gen_images, gen_targets = _generated_samples(
                fitted, conditions, config.total - k, pitch_range, yaw_range, rng
            )

            augmented = finetune_oracle(
                oracle,
                torch.cat([real_images, gen_images]),
                torch.cat([real_targets, gen_targets]),
                config.finetune_steps,
                config.finetune_lr,
                seed,
            )
            real_only = finetune_oracle(
                oracle, real_images, real_targets, config.finetune_steps, config.finetune_lr, seed
            )
            row = AugmentRow(
                seed=seed,
                k_real=k,
                n_generated=config.total - k,
                error_augmented_deg=mean_gaze_error_deg(augmented, test_images, test_targets),
                error_real_only_deg=mean_gaze_error_deg(real_only, test_images, test_targets),
            )
            logger.info(
                f"seed {seed} k {k}: augmented {row.error_augmented_deg:.3f} deg, "
                f"real only {row.error_real_only_deg:.3f} deg"
            )
            rows.append(row)

    write_augment_results(rows, output_dir, identity)
    return rows


def summarize(rows: Sequence[AugmentRow]) -> Dict:
    """Plot-ready per-k means plus the overall augmented-minus-real delta."""
    ks = sorted({r.k_real for r in rows})
    augmented = [float(np.mean([r.error_augmented_deg for r in rows if r.k_real == k])) for k in ks]
    real_only = [float(np.mean([r.error_real_only_deg for r in rows if r.k_real == k])) for k in ks]
    return {
        "k_real": ks,
        "augmented_mean_deg": augmented,
        "real_only_mean_deg": real_only,
        "mean_delta_deg": float(np.mean([r.delta_deg for r in rows])),
        "augmented_monotone_nonincreasing": all(b <= a for a, b in zip(augmented, augmented[1:])),
        "n_seeds": len({r.seed for r in rows}),
    }


def write_augment_results(rows: Sequence[AugmentRow], output_dir: Path, identity: int) -> None:
    with open(output_dir / "augment.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["seed", "k_real", "n_generated", "error_augmented_deg", "error_real_only_deg", "delta_deg"])
        for r in rows:
            writer.writerow([
                r.seed, r.k_real, r.n_generated,
                f"{r.error_augmented_deg:.6f}", f"{r.error_real_only_deg:.6f}", f"{r.delta_deg:.6f}",
            ])
    summary = summarize(rows)
    summary["identity"] = identity
    summary["rows"] = [dict(asdict(r), delta_deg=r.delta_deg) for r in rows]
    (output_dir / "augment.json").write_text(json.dumps(summary, indent=2))
    logger.info(f"Mean augmented - real-only delta: {summary['mean_delta_deg']:.3f} deg")
