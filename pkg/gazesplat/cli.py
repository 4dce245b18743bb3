"""
gazesplat command-line interface.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 runtime failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from gazesplat.config import apply_torch_settings, settings
from gazesplat.errors import CONFIGURATION_ERRORS, GazeSplatError, InvalidArgumentError
from gazesplat.models import (
    AblationFlags,
    AugmentConfig,
    DatasetConfig,
    EvalConfig,
    OracleConfig,
    OracleRole,
    TrainConfig,
    load_config,
)

logger = logging.getLogger("gazesplat")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=getattr(logging, (level or settings.LOG_LEVEL).upper()),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def _banner(title: str, lines: List[str]) -> None:
    logger.info("=" * 60)
    logger.info(title)
    logger.info("=" * 60)
    for line in lines:
        logger.info(line)
    logger.info("=" * 60)


def _ablation_from_args(args: argparse.Namespace, base: AblationFlags) -> AblationFlags:
    updates = {
        key: True
        for key in AblationFlags.model_fields
        if getattr(args, key, False)
    }
    return base.model_copy(update=updates)


# ============================================================================
# Commands
# ============================================================================

def cmd_generate_data(args: argparse.Namespace) -> int:
    from gazesplat.toyscene.dataset import make_dataset

    if args.out is None:
        raise InvalidArgumentError("generate-data needs --out")
    config = load_config(args.config, DatasetConfig, seed=args.seed)
    _banner("Generating synthetic dataset", [
        f"Output: {args.out}",
        f"Identities: {config.n_identities}, frames: {config.n_frames}, views: {config.n_views}",
        f"Resolution: {config.resolution}x{config.resolution}, seed: {config.seed}",
    ])
    make_dataset(config, args.out, force=args.force)
    return EXIT_OK


def cmd_train_oracle(args: argparse.Namespace) -> int:
    from gazesplat.toyscene.oracle import train_oracle

    roles = [OracleRole(args.role)] if args.role else list(OracleRole)
    for role in roles:
        config = load_config(
            args.config, OracleConfig,
            dataset=args.dataset, output_dir=args.out, seed=args.seed, role=role.value,
        )
        _banner(f"Training {role.value} oracle", [f"Dataset: {config.dataset}", f"Output: {config.output_dir}"])
        train_oracle(config)
    return EXIT_OK


def _train_config(args: argparse.Namespace) -> TrainConfig:
    config = load_config(
        args.config, TrainConfig,
        dataset=args.dataset, output_dir=args.out, oracle_dir=args.oracle_dir,
        seed=args.seed, epochs=args.epochs, max_steps=args.max_steps,
    )
    return config.model_copy(update={"ablation": _ablation_from_args(args, config.ablation)})


def cmd_train(args: argparse.Namespace) -> int:
    from gazesplat.trainer.loop import train

    result = train(_train_config(args))
    logger.info(
        f"Head PSNR on probe frames: {result.init_psnr:.2f} dB -> {result.final_psnr:.2f} dB; "
        f"last checkpoint {result.checkpoints[-1]}"
    )
    return EXIT_OK


def cmd_redirect(args: argparse.Namespace) -> int:
    from gazesplat.evaluation import gaze_sweep, redirect, warn_if_outside
    from gazesplat.splat.featuremap import tensor_to_png
    from gazesplat.toyscene.dataset import ToyDataset
    from gazesplat.trainer.loop import fit_identity, load_frames, load_model

    if args.out is None:
        raise InvalidArgumentError("redirect needs --out")
    model, train_config = load_model(args.checkpoint)
    dataset = ToyDataset(args.dataset or train_config.dataset)
    matches = [r for r in dataset.records if r.key == args.record]
    if not matches:
        raise InvalidArgumentError(f"no record '{args.record}' in {dataset.root}")
    source = matches[0]
    condition = dataset.condition(source)

    if args.finetune_steps > 0:
        fit_identity(model, load_frames(dataset, [source]), train_config, steps=args.finetune_steps, seed=args.seed or 0)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.sweep:
        frames = gaze_sweep(model, condition, args.sweep, dataset.config.yaw_range, pitch=args.pitch)
        for i, frame in enumerate(frames):
            tensor_to_png(frame, out / f"frame_{i:03d}.png")
        logger.info(f"Wrote {len(frames)} sweep frames to {out}")
        return EXIT_OK

    pitch = condition.pitch if args.pitch is None else args.pitch
    yaw = condition.yaw if args.yaw is None else args.yaw
    warn_if_outside(pitch, yaw, dataset.config.pitch_range, dataset.config.yaw_range)
    path = tensor_to_png(redirect(model, condition, pitch, yaw), out / f"{source.key}_redirected.png")
    logger.info(f"Wrote {path}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    from gazesplat.evaluation import evaluate, format_report

    config = load_config(
        args.config, EvalConfig,
        checkpoint=args.checkpoint, dataset=args.dataset, oracle_dir=args.oracle_dir, seed=args.seed,
    )
    report = evaluate(config)
    print(format_report(report))
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.model_dump_json(indent=2))
        (out / "report.txt").write_text(format_report(report) + "\n")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    from gazesplat.evaluation import format_comparison
    from gazesplat.experiments import ablate

    base = _train_config(args).model_copy(update={"ablation": AblationFlags()})
    requested = _ablation_from_args(args, AblationFlags())
    variants = None if requested == AblationFlags() else [requested]
    eval_template = load_config(
        args.eval_config, EvalConfig,
        checkpoint="", dataset=base.dataset, oracle_dir=args.oracle_dir, seed=args.seed,
    )
    reports = ablate(base, eval_template, variants)
    print(format_comparison(reports))
    return EXIT_OK


def cmd_augment_experiment(args: argparse.Namespace) -> int:
    from gazesplat.experiments import augment_experiment, summarize

    config = load_config(
        args.config, AugmentConfig,
        checkpoint=args.checkpoint, dataset=args.dataset, oracle_dir=args.oracle_dir, output_dir=args.out,
        seeds=[args.seed] if args.seed is not None else None,
    )
    rows = augment_experiment(config)
    print(json.dumps(summarize(rows), indent=2))
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    if args.checkpoint is not None:
        settings.CHECKPOINT_DIR = args.checkpoint
    uvicorn.run(
        "gazesplat.main:app",
        host=args.host or settings.SERVER_HOST,
        port=args.port or settings.SERVER_PORT,
        log_level=settings.LOG_LEVEL.lower(),
    )
    return EXIT_OK


# ============================================================================
# Parser
# ============================================================================

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (keys are the record's field names)")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--force", action="store_true", help="Overwrite existing outputs")


def _add_ablation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--no-two-stream", dest="no_two_stream", action="store_true",
                        help="Merge eye Gaussians into the face stream")
    parser.add_argument("--no-eye-rotation", dest="no_eye_rotation", action="store_true",
                        help="Deform eyes with an offset field instead of rigid rotation")
    parser.add_argument("--no-expression-guided", dest="no_expression_guided", action="store_true",
                        help="Disable renderer attention")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazesplat",
        description="Two-stream Gaussian head avatars with gaze redirection",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Synthetic dataset, both oracles, then a model
  gazesplat generate-data --out data/toy
  gazesplat train-oracle --dataset data/toy --out runs/oracles
  gazesplat train --dataset data/toy --oracle-dir runs/oracles --out runs/full

  # Redirect one frame, or sweep 16 yaw values
  gazesplat redirect --checkpoint runs/full --record 000_017_00 --yaw 0.3 --out out/
  gazesplat redirect --checkpoint runs/full --record 000_017_00 --sweep 16 --out out/sweep

  # Metrics, ablations and the augmentation experiment
  gazesplat evaluate --checkpoint runs/full --dataset data/toy --oracle-dir runs/oracles
  gazesplat ablate --dataset data/toy --oracle-dir runs/oracles --out runs/ablation
  gazesplat augment-experiment --checkpoint runs/full --dataset data/toy --oracle-dir runs/oracles --out runs/augment
        """,
    )
    parser.add_argument("--log-level", help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="Render the synthetic head dataset")
    _add_common(p)
    p.set_defaults(handler=cmd_generate_data)

    p = sub.add_parser("train-oracle", help="Train the training and evaluation oracles")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="Dataset directory")
    p.add_argument("--role", choices=[r.value for r in OracleRole], help="Train only one role")
    p.set_defaults(handler=cmd_train_oracle)

    p = sub.add_parser("train", help="Train a GazeGaussian model")
    _add_common(p)
    p.add_argument("--dataset", help="Dataset directory")
    p.add_argument("--oracle-dir", help="Oracle directory (needed when the gaze weight is > 0)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int)
    _add_ablation_flags(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("redirect", help="Render a frame under a new gaze")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="Checkpoint directory")
    p.add_argument("--dataset", help="Dataset directory (defaults to the training dataset)")
    p.add_argument("--record", required=True, help="Source record key, e.g. 000_017_00")
    p.add_argument("--pitch", type=float, help="Target pitch (radians)")
    p.add_argument("--yaw", type=float, help="Target yaw (radians)")
    p.add_argument("--sweep", type=int, default=0, help="Emit N frames over the yaw range")
    p.add_argument("--finetune-steps", type=int, default=0, help="Identity fitting steps on the source frame")
    p.set_defaults(handler=cmd_redirect)

    p = sub.add_parser("evaluate", help="Score redirection with the evaluation oracle")
    _add_common(p)
    p.add_argument("--checkpoint", help="Checkpoint directory")
    p.add_argument("--dataset", help="Dataset directory")
    p.add_argument("--oracle-dir", help="Oracle directory")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ablate", help="Train and evaluate ablation variants")
    _add_common(p)
    p.add_argument("--dataset", help="Dataset directory")
    p.add_argument("--oracle-dir", help="Oracle directory")
    p.add_argument("--eval-config", help="JSON EvalConfig used for every variant")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int)
    _add_ablation_flags(p)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("augment-experiment", help="Gaze-estimator augmentation sweep")
    _add_common(p)
    p.add_argument("--checkpoint", help="Checkpoint directory")
    p.add_argument("--dataset", help="Dataset directory")
    p.add_argument("--oracle-dir", help="Oracle directory")
    p.set_defaults(handler=cmd_augment_experiment)

    p = sub.add_parser("serve", help="Serve POST /redirect over HTTP")
    p.add_argument("--checkpoint", help="Checkpoint directory (else CHECKPOINT_DIR)")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    apply_torch_settings(settings)

    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except CONFIGURATION_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_CONFIG
    except GazeSplatError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
