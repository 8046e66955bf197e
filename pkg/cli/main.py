#!/usr/bin/env python3
"""
Command-line entry point for PoseLift
Sub-commands: synth, train, eval, compare, render, verify
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import ValidationError

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cli.manifest import RunManifest, append_run_log, manifest_path_for, utc_now
from core.errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    DivergenceError,
    NumericalError,
    ShapeError,
    config_error,
)
from core.eval_report import (
    compare,
    evaluate,
    load_tables_csv,
    render_table,
    save_comparisons_csv,
    save_tables_csv,
)
from core.lifter_model import LifterConfig, Variant, build, load_checkpoint
from core.metrics import LossKind, default_joint_weights, load_joint_weights
from core.pose_data import compute_norm_stats, default_subject_split, split_by_subject
from core.trainer import Trainer, TrainConfig, predict_mm
from core.verify import run_checks
from core.viz import RenderStyle, render_triptych
from ingestion.dataset_csv import load_dataset, save_dataset
from ingestion.synth_poses import synth_generate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

REQUIRED = {
    "synth": ["n", "out"],
    "train": ["data", "out"],
    "eval": ["checkpoint", "data", "out"],
    "compare": ["baseline", "candidate", "out"],
    "render": ["checkpoint", "data", "out"],
    "verify": [],
}


def setup_logging(log_dir: str = "logs"):
    os.makedirs(log_dir, exist_ok=True)
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=[logging.FileHandler(os.path.join(log_dir, "poselift.log")), logging.StreamHandler()],
        force=True,
    )


def _subjects(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [str(s) for s in value]
    return [s.strip() for s in str(value).split(",") if s.strip()]


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flag values for this command (command line wins)")
    common.add_argument("--log-dir", default="logs", help="Directory for poselift.log and runs.jsonl")

    parser = argparse.ArgumentParser(prog="poselift", description="2D-to-3D human pose lifting")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {}

    p = sub.add_parser("synth", parents=[common], help="Generate a synthetic dataset CSV")
    p.add_argument("--n", type=int, help="Number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="Output CSV path")
    p.add_argument("--noise-std", type=float, default=0.0, help="Gaussian pixel noise added to 2D poses")
    commands["synth"] = p

    p = sub.add_parser("train", parents=[common], help="Train a lifter variant")
    p.add_argument("--data", help="Dataset CSV")
    p.add_argument("--variant", default="original", choices=[v.value for v in Variant])
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--decay-factor", type=float, default=0.96)
    p.add_argument("--decay-interval", type=int, default=25000)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--linear-size", type=int, default=1024)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--per-site-beta", action="store_true", help="One Swish beta per activation site")
    p.add_argument("--loss", choices=[k.value for k in LossKind], help="Defaults to wmse for v3, mse otherwise")
    p.add_argument("--weights-file", help="Joint weight JSON (defaults to the shipped map)")
    p.add_argument("--weight-softening", type=float, default=1.0, help="Use w ** alpha as joint weights")
    p.add_argument("--max-grad-norm", type=float, default=None)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--train-subjects", help="Comma-separated subject ids (default: first five)")
    p.add_argument("--test-subjects", help="Comma-separated subject ids (default: the rest)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="Output directory")
    commands["train"] = p

    p = sub.add_parser("eval", parents=[common], help="Per-action MPJPE table for a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--weights-file", help="Also write a weighted-MPJPE table")
    p.add_argument("--subjects", help="Comma-separated subject ids to evaluate (default: all)")
    p.add_argument("--label", help="Row label (default: the checkpoint's variant)")
    p.add_argument("--out", help="Output table CSV")
    commands["eval"] = p

    p = sub.add_parser("compare", parents=[common], help="Compare candidate tables against a baseline")
    p.add_argument("--baseline", help="Baseline table CSV")
    p.add_argument("--candidate", nargs="+", help="Candidate table CSVs")
    p.add_argument("--out", help="Output comparison CSV")
    commands["compare"] = p

    p = sub.add_parser("render", parents=[common], help="Three-panel SVG for one sample")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--azimuth", type=float, default=70.0)
    p.add_argument("--elevation", type=float, default=15.0)
    p.add_argument("--out", help="Output SVG path")
    commands["render"] = p

    p = sub.add_parser("verify", parents=[common], help="Gradient checks and metric oracles")
    p.add_argument("--full", action="store_true", help="Add whole-model checks for every variant and seed")
    commands["verify"] = p

    return parser, commands


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse flags, fold in --config values, then check required flags"""
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    sub = commands[args.command]

    if args.config:
        try:
            with open(args.config, encoding="utf-8") as f:
                values = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            sub.error(f"cannot read config file {args.config}: {e}")
        if not isinstance(values, dict):
            sub.error(f"config file {args.config} must hold a JSON object")
        known = {a.dest for a in sub._actions if a.dest not in ("help", "config")}
        unknown = sorted(set(values) - known)
        if unknown:
            sub.error(f"unknown keys in config file {args.config}: {', '.join(unknown)}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)

    missing = [name for name in REQUIRED[args.command] if getattr(args, name, None) in (None, [])]
    if missing:
        sub.error("missing required arguments: " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args


def cmd_synth(args) -> Tuple[int, RunManifest]:
    manifest = RunManifest(command="synth", seed=args.seed, started_at=utc_now())
    manifest.config = {"n": args.n, "noise_std": args.noise_std}
    data = synth_generate(args.n, args.seed, noise_std=args.noise_std)
    out = save_dataset(data, args.out)
    manifest.outputs = [str(out)]
    manifest.finish().write(manifest_path_for(out))
    print(f"✅ Wrote {len(data)} samples to {out}")
    return EXIT_OK, manifest


def cmd_train(args) -> Tuple[int, RunManifest]:
    manifest = RunManifest(command="train", seed=args.seed, started_at=utc_now())
    data = load_dataset(args.data)
    manifest.add_input(args.data)

    train_subjects, test_subjects = _subjects(args.train_subjects), _subjects(args.test_subjects)
    if train_subjects is None or test_subjects is None:
        default_train, default_test = default_subject_split(data)
        train_subjects = train_subjects if train_subjects is not None else default_train
        test_subjects = test_subjects if test_subjects is not None else [s for s in default_test if s not in train_subjects]
    train_data, test_data = split_by_subject(data, train_subjects, test_subjects)
    if not train_data:
        raise DatasetError(f"no training samples for subjects {train_subjects}")
    stats = compute_norm_stats(train_data)

    try:
        variant = Variant(args.variant)
        loss = LossKind(args.loss) if args.loss else (LossKind.WMSE if variant is Variant.V3 else LossKind.MSE)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if loss is LossKind.WMSE and variant is not Variant.V3:
        logger.warning(f"wmse loss with variant {variant.value}: only v3 trains with wmse in the reference setup")
    elif variant is Variant.V3 and loss is not LossKind.WMSE:
        logger.warning(f"variant v3 trained with {loss.value}: v3 is defined by its wmse loss")

    weights = load_joint_weights(args.weights_file) if args.weights_file else default_joint_weights()
    if args.weights_file:
        manifest.add_input(args.weights_file)
    weights = weights.softened(args.weight_softening)

    config = LifterConfig.for_variant(
        variant,
        linear_size=args.linear_size,
        num_blocks=args.blocks,
        dropout_rate=args.dropout,
        shared_beta=not args.per_site_beta,
    )
    tconfig = TrainConfig.create(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        decay_factor=args.decay_factor,
        decay_interval=args.decay_interval,
        loss=loss,
        seed=args.seed,
        shuffle=not args.no_shuffle,
        eval_every=args.eval_every,
        max_grad_norm=args.max_grad_norm,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / "checkpoint.json"
    log_path = out / "train_log.csv"
    manifest.config = {
        "model": config.model_dump(mode="json"),
        "train": tconfig.model_dump(mode="json"),
        "train_subjects": list(train_subjects),
        "test_subjects": list(test_subjects),
        "joint_weights": weights.as_dict(),
        "joint_weights_provenance": weights.provenance,
    }

    model = build(config, args.seed)
    trainer = Trainer(tconfig, weights, checkpoint, meta={"variant": variant.value})
    try:
        log = trainer.train(model, train_data, test_data, stats)
    except DivergenceError:
        trainer.log.save_csv(log_path)
        if checkpoint.exists():
            logger.error(f"Last good checkpoint kept at {checkpoint}")
        raise

    log.save_csv(log_path)
    manifest.outputs = [str(checkpoint), str(log_path)]
    manifest.finish().write(out / "manifest.json")
    last = log.records[-1]
    print(f"✅ Trained {variant.value} for {len(log)} epochs: loss {last.train_loss:.6f}, test MPJPE {last.eval_mpjpe_mm:.2f} mm")
    print(f"📦 Checkpoint: {checkpoint}")
    return EXIT_OK, manifest


def _load_eval_inputs(args, manifest: RunManifest):
    ckpt = load_checkpoint(args.checkpoint)
    manifest.add_input(args.checkpoint)
    if ckpt.norm_stats is None:
        raise CheckpointError(f"{args.checkpoint}: checkpoint carries no normalization statistics")
    data = load_dataset(args.data)
    manifest.add_input(args.data)
    if data and data[0].num_joints != ckpt.config.num_joints:
        raise DatasetError(
            f"checkpoint expects {ckpt.config.num_joints} joints but {args.data} has {data[0].num_joints}"
        )
    return ckpt, data


def cmd_eval(args) -> Tuple[int, RunManifest]:
    manifest = RunManifest(command="eval", started_at=utc_now())
    ckpt, data = _load_eval_inputs(args, manifest)
    subjects = _subjects(args.subjects)
    if subjects:
        data = [p for p in data if p.subject in set(subjects)]
    weights = None
    if args.weights_file:
        weights = load_joint_weights(args.weights_file)
        manifest.add_input(args.weights_file)
    manifest.config = {"subjects": subjects, "label": args.label, "weighted": weights is not None}

    table, weighted = evaluate(ckpt.model, data, ckpt.norm_stats, weights, label=args.label)
    out = save_tables_csv([table], args.out)
    manifest.outputs = [str(out)]
    tables = [table]
    if weighted is not None:
        weighted_out = save_tables_csv([weighted], out.with_name(f"{out.stem}_weighted{out.suffix}"))
        manifest.outputs.append(str(weighted_out))
        tables.append(weighted)
    manifest.finish().write(manifest_path_for(out))
    print(render_table(tables, "text"), end="")
    return EXIT_OK, manifest


def cmd_compare(args) -> Tuple[int, RunManifest]:
    manifest = RunManifest(command="compare", started_at=utc_now())
    baseline_tables = load_tables_csv(args.baseline)
    manifest.add_input(args.baseline)
    if not baseline_tables:
        raise DatasetError(f"{args.baseline}: no table rows")
    if len(baseline_tables) > 1:
        logger.warning(f"{args.baseline} holds {len(baseline_tables)} rows, using the first as the baseline")
    baseline = baseline_tables[0]
    candidates = []
    paths = [args.candidate] if isinstance(args.candidate, str) else args.candidate
    for path in paths:
        candidates.extend(load_tables_csv(path))
        manifest.add_input(path)
    if not candidates:
        raise DatasetError("no candidate table rows to compare")

    comparisons = [compare(baseline, c) for c in candidates]
    out = save_comparisons_csv(comparisons, args.out)
    text = render_table([baseline] + candidates, "text") + "".join(c.summary() + "\n" for c in comparisons)
    text_out = out.with_suffix(".txt")
    text_out.write_text(text, encoding="utf-8")
    manifest.outputs = [str(out), str(text_out)]
    manifest.finish().write(manifest_path_for(out))
    print(text, end="")
    return EXIT_OK, manifest


def cmd_render(args) -> Tuple[int, RunManifest]:
    manifest = RunManifest(command="render", started_at=utc_now())
    ckpt, data = _load_eval_inputs(args, manifest)
    if not 0 <= args.index < len(data):
        raise ConfigError(f"index {args.index} is out of range for {len(data)} samples in {args.data}")
    sample = data[args.index]
    joints = ckpt.config.num_joints
    pred = predict_mm(ckpt.model, sample.pose2d.reshape(1, -1), ckpt.norm_stats).reshape(joints, 3)
    try:
        style = RenderStyle(azimuth=args.azimuth, elevation=args.elevation)
    except ValidationError as e:
        raise config_error(e, "render style") from None
    manifest.config = {"index": args.index, "style": style.model_dump()}

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_triptych(sample.pose2d, sample.pose3d, pred, style), encoding="utf-8")
    manifest.outputs = [str(out)]
    manifest.finish().write(manifest_path_for(out))
    print(f"🖼️  Wrote {out} ({sample.subject} {sample.action} frame {sample.frame})")
    return EXIT_OK, manifest


def cmd_verify(args) -> Tuple[int, Optional[RunManifest]]:
    results = run_checks(full=args.full)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"❌ {len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
        return EXIT_VERIFY_FAILED, None
    print(f"✅ All {len(results)} checks passed")
    return EXIT_OK, None


HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "render": cmd_render,
    "verify": cmd_verify,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log_dir)
    manifest = None
    try:
        code, manifest = HANDLERS[args.command](args)
    except DivergenceError as e:
        logger.error(f"Training diverged: {e}")
        code = EXIT_DIVERGED
    except NumericalError as e:
        logger.error(f"{args.command}: {e}")
        code = EXIT_DIVERGED if args.command == "train" else EXIT_USAGE
    except (ConfigError, DatasetError, CheckpointError, ShapeError) as e:
        logger.error(f"{args.command}: {e}")
        code = EXIT_USAGE
    except ValidationError as e:
        logger.error(f"{args.command}: {config_error(e)}")
        code = EXIT_USAGE
    except OSError as e:
        logger.error(f"{args.command}: {e}")
        code = EXIT_USAGE
    append_run_log(args.log_dir, args.command, code, manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())
