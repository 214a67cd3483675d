"""
Command-line launcher for PairAge.

Verbs:
    generate   render a synthetic cohort (manifest + rasters)
    train      train the models of every selected fold
    evaluate   evaluate trained folds and write a report
    cv         train and evaluate every fold in one go
    estimate   recover ages from a relation-prediction CSV
    compare    compare reports with t-tests and cohort ranks

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime or
numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from config import RESOLVED_CONFIG_NAME, load_config
from data_processing.data_processor import CohortDataProcessor
from experiments.cross_validation import load_cohort, run_cv
from experiments.evaluation import EVALUATION_MODES
from experiments.predictor import build_model_for
from experiments.reporting import compare_reports, load_report, plot_training_curves, write_report
from experiments.training import train_fold
from relations.estimation import estimate_subjects
from relations.io import read_predictions
from relations.recovery import parse_strategies

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def _banner(title):
    print(f"\n{'=' * 60}\n{title}\n{'=' * 60}")


def _config_from_args(args, extra=None):
    extra = dict(extra or {})
    if getattr(args, "seed", None) is not None:
        extra["seed"] = args.seed
    if getattr(args, "output_dir", None):
        extra["output_dir"] = args.output_dir
    if getattr(args, "data_dir", None):
        extra["data_dir"] = args.data_dir
    return load_config(args.config, preset=args.preset, overrides=args.set, extra=extra)


def cmd_generate(config):
    """
    Render the configured synthetic cohort into ``config.data_dir``.

    Returns:
        pd.DataFrame: The manifest that was written
    """
    _banner(f"Generating {config.generator.n_subjects} subjects")
    processor = CohortDataProcessor(config.data_dir)
    manifest = processor.generate(config.generator, config.seed, k=config.cv.k)
    config.write_resolved(config.data_dir)
    processor.plot_age_histogram(manifest, Path(config.data_dir) / "age_histogram.png")
    print(f"Manifest: {processor.manifest_path}")
    return manifest


def cmd_train(config, resume=False):
    """
    Train every selected fold and write checkpoints, training curves and the
    architecture summary into ``config.output_dir``.

    Returns:
        pd.DataFrame: Training curves of all folds and models
    """
    output_dir = Path(config.output_dir)
    _banner(f"Training {config.loss.mode} models on folds {config.cv.selected_folds()}")
    config.write_resolved(output_dir)
    manifest, images = load_cohort(config)

    summaries = {"-".join(subset): build_model_for(config, subset, seed=config.seed).summary()
                 for subset in config.loss.model_subsets()}
    (output_dir / "architecture.json").write_text(json.dumps(summaries, indent=2))

    curves = []
    for fold in config.cv.selected_folds():
        _, fold_curves = train_fold(config, manifest, images, fold, output_dir, resume=resume)
        curves.append(fold_curves)
    curves = pd.concat(curves, ignore_index=True)
    curves.to_csv(output_dir / "training_curves.csv", index=False, float_format="%.6f")
    plot_training_curves(curves, output_dir / "training_curves.png")
    print(f"Checkpoints and training curves in {output_dir}")
    return curves


def cmd_evaluate(config, checkpoint_dir=None, report_dir=None):
    """
    Evaluate trained folds and write the report.

    Raises:
        ConfigError: If a checkpoint was trained under a different config hash
    """
    checkpoint_dir = Path(checkpoint_dir or config.output_dir)
    report_dir = Path(report_dir or checkpoint_dir / "report")
    _banner(f"Evaluating {checkpoint_dir} ({', '.join(config.evaluation.modes)})")
    report = run_cv(config, checkpoint_dir, workers=config.workers, train=False)
    config.write_resolved(report_dir)
    write_report(report, report_dir)
    _print_summary(report)
    print(f"Report: {report_dir}")
    return report


def cmd_cv(config, resume=False):
    """Train and evaluate every selected fold, then write the report."""
    output_dir = Path(config.output_dir)
    _banner(f"Cross-validating {config.cv.k} folds with {config.workers} worker(s)")
    config.write_resolved(output_dir)
    report = run_cv(config, output_dir, workers=config.workers, train=True, resume=resume)
    write_report(report, output_dir / "report")
    _print_summary(report)
    print(f"Report: {output_dir / 'report'}")
    return report


def cmd_estimate(predictions_path, output_path, references_path=None, max_age=100.0, threshold=5.0,
                 strategies=None, clamp=False):
    """
    Recover per-subject ages from a relation-prediction CSV.

    Returns:
        pd.DataFrame: Per-subject estimates
    """
    predictions = read_predictions(predictions_path)
    reference_ages = None
    if references_path:
        references = pd.read_csv(references_path, dtype={"id": str})
        reference_ages = dict(zip(references["id"], references["tau_years"].astype(float)))
    estimates = estimate_subjects(predictions, reference_ages=reference_ages, max_age=max_age,
                                  threshold=threshold, strategies=strategies, clamp=clamp)
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    estimates.to_csv(output_path, float_format="%.6f")
    print(f"Estimated {len(estimates)} subjects with {', '.join(estimates.columns)} -> {output_path}")
    return estimates


def cmd_compare(report_paths, output_dir, names=None, strategy="S3", baseline=None, alpha=5.0):
    """
    Compare reports on the same subjects.

    Returns:
        pd.DataFrame: One row per report with metrics, t-test and average rank
    """
    names = names or [Path(p).name if Path(p).is_dir() else Path(p).parent.name for p in report_paths]
    if len(set(names)) != len(names):
        names = [f"{name}#{i}" for i, name in enumerate(names)]
    reports = {name: load_report(path) for name, path in zip(names, report_paths)}
    table, cohort_mae = compare_reports(reports, strategy=strategy, baseline=baseline, alpha=alpha)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(output_dir / "comparison.csv", float_format="%.6f")
    cohort_mae.to_csv(output_dir / "comparison_cohort_mae.csv", float_format="%.6f")
    (output_dir / "comparison.json").write_text(table.to_json(orient="index", indent=2))
    _banner(f"Comparison on {strategy} (baseline {baseline or names[0]})")
    print(table.to_string(float_format=lambda v: f"{v:.4f}"))
    return table


def _print_summary(report):
    if report.summary.empty:
        return
    print(report.summary.to_string(float_format=lambda v: f"{v:.3f}"))
    if report.self_vs_cross:
        print("Mean |r2| " + ", ".join(f"{k}={v:.3f}" for k, v in sorted(report.self_vs_cross.items())))


def build_parser():
    parser = argparse.ArgumentParser(prog="pairage", description="Deep relation learning for age regression")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    def run_options(p):
        p.add_argument("--config", type=Path, help="YAML run configuration")
        p.add_argument("--preset", help="Named preset: desk, paper-schedule, smoke")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="Override one config value (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--output-dir", help="Run directory (default $PAIRAGE_OUTPUT_ROOT/run)")
        p.add_argument("--data-dir", help="Cohort directory (default <output-dir>/data)")

    run_options(sub.add_parser("generate", help="Render a synthetic cohort"))

    train = sub.add_parser("train", help="Train the models of every selected fold")
    run_options(train)
    train.add_argument("--folds", help="Comma-separated folds to train (default all)")
    train.add_argument("--resume", action="store_true", help="Continue from the latest epoch checkpoints")

    evaluate = sub.add_parser("evaluate", help="Evaluate trained folds")
    run_options(evaluate)
    evaluate.add_argument("--checkpoint", type=Path, help="Run directory holding fold_<k>/ checkpoints")
    evaluate.add_argument("--report-dir", type=Path)
    evaluate.add_argument("--folds", help="Comma-separated folds to evaluate (default all)")
    evaluate.add_argument("--strategies", help="Comma-separated strategies, e.g. S8,S15")
    evaluate.add_argument("--mode", choices=list(EVALUATION_MODES) + ["all"], default="all")
    evaluate.add_argument("--alpha", type=float, help="CS threshold in years (default 5)")

    cv = sub.add_parser("cv", help="Train and evaluate every fold")
    run_options(cv)
    cv.add_argument("--workers", type=int, help="Fold-level worker processes")
    cv.add_argument("--resume", action="store_true")

    estimate = sub.add_parser("estimate", help="Recover ages from relation predictions")
    estimate.add_argument("predictions", type=Path, help="CSV with pair_id,x_id,y_id,r1_hat..r4_hat")
    estimate.add_argument("--references", type=Path, help="CSV with id,tau_years of reference subjects")
    estimate.add_argument("--output", type=Path, default=Path("estimates.csv"))
    estimate.add_argument("--max-age", type=float, default=100.0)
    estimate.add_argument("--threshold", type=float, default=5.0, help="MC threshold t in years")
    estimate.add_argument("--strategies")
    estimate.add_argument("--clamp", action="store_true", help="Clip estimates to [0, max age]")

    compare = sub.add_parser("compare", help="Compare reports on the same subjects")
    compare.add_argument("reports", nargs="+", type=Path, help="Report directories or report.json files")
    compare.add_argument("--names", help="Comma-separated display names")
    compare.add_argument("--strategy", default="S3")
    compare.add_argument("--baseline", help="Name of the baseline report (default the first)")
    compare.add_argument("--alpha", type=float, default=5.0)
    compare.add_argument("--output", type=Path, default=Path("comparison"))
    return parser


def _fold_list(text):
    return [int(part) for part in text.split(",") if part.strip()] if text else None


def dispatch(args):
    if args.command == "estimate":
        strategies = parse_strategies(args.strategies) if args.strategies else None
        cmd_estimate(args.predictions, args.output, args.references, args.max_age, args.threshold,
                     strategies, args.clamp)
        return
    if args.command == "compare":
        names = [n.strip() for n in args.names.split(",")] if args.names else None
        if names is not None and len(names) != len(args.reports):
            raise ValueError(f"{len(names)} names for {len(args.reports)} reports")
        cmd_compare(args.reports, args.output, names, args.strategy, args.baseline, args.alpha)
        return

    extra = {}
    folds = _fold_list(getattr(args, "folds", None))
    if folds is not None:
        extra["cv"] = {"folds": folds}
    if args.command == "evaluate":
        evaluation = {}
        if args.strategies:
            evaluation["strategies"] = parse_strategies(args.strategies)
        if args.mode != "all":
            evaluation["modes"] = [args.mode]
        if args.alpha is not None:
            evaluation["alpha"] = args.alpha
        if evaluation:
            extra["evaluation"] = evaluation
        if args.checkpoint is not None and (args.checkpoint / RESOLVED_CONFIG_NAME).exists() and not args.config:
            args.config = args.checkpoint / RESOLVED_CONFIG_NAME
    if args.command == "cv" and args.workers is not None:
        extra["workers"] = args.workers

    config = _config_from_args(args, extra)
    if args.command == "generate":
        cmd_generate(config)
    elif args.command == "train":
        cmd_train(config, resume=args.resume)
    elif args.command == "evaluate":
        cmd_evaluate(config, args.checkpoint, args.report_dir)
    elif args.command == "cv":
        cmd_cv(config, resume=args.resume)


def main(argv=None):
    """
    Parse ``argv`` and run the selected verb.

    Returns:
        int: Process exit code
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    try:
        dispatch(args)
    except (ValueError, FileNotFoundError) as err:
        logger.error("%s", err)
        return EXIT_INVALID
    except (RuntimeError, OSError) as err:
        logger.error("%s", err)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
