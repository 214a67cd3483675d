"""
Evaluation reports: aggregation across folds, JSON/CSV/PNG output, and
comparison of several reports on the same subjects.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from relations.io import write_predictions

from .evaluation import DIRECT_STRATEGY, REPORTED_STRATEGIES
from .metrics import DEFAULT_ALPHA, compute_metrics, pearson, strategy_metrics, uncertainty_table
from .statistics import paired_t_test, rank_models, significance_stars, strategy_t_tests

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"
ESTIMATES_NAME = "estimates.csv"
SUBJECT_COLUMNS = ["fold", "cohort", "tau_years"]
PRIMARY_STRATEGY = "S3"
PREDICTIONS_DIR = "predictions"
LONG_TABLES = ("fold_metrics", "training_curves", "scatter", "relation_metrics")
RELATION_METRIC_COLUMNS = ["fold", "mode", "relation", "mae", "cs", "pearson", "n"]


@dataclass
class EvalReport:
    """
    Attributes:
        estimates (pd.DataFrame): Index id; fold, cohort, tau_years and one column per strategy
        fold_metrics (pd.DataFrame): One row per (fold, strategy)
        summary (pd.DataFrame): Index strategy; fold mean and std of MAE, CS and Pearson
        uncertainty (pd.DataFrame): Index id; tau_years and per-mode uncertainty
        uncertainty_correlation (dict): Mode -> Pearson of uncertainty vs. age
        cohort_mae (pd.DataFrame): Rows cohorts, columns strategies
        t_tests (pd.DataFrame): Index strategy; paired t-test against the baseline
        self_vs_cross (dict): Mean |r2_hat| on self and cross pairs
        relation_metrics (pd.DataFrame): One row per (fold, mode, relation)
        predictions (dict): Fold -> held-out relation predictions
    """

    config_hash: str
    alpha: float
    strategies: list
    estimates: pd.DataFrame
    fold_metrics: pd.DataFrame
    summary: pd.DataFrame
    uncertainty: pd.DataFrame = None
    uncertainty_correlation: dict = field(default_factory=dict)
    cohort_mae: pd.DataFrame = None
    t_tests: pd.DataFrame = None
    baseline: str = "S4"
    self_vs_cross: dict = field(default_factory=dict)
    training_curves: pd.DataFrame = None
    relation_metrics: pd.DataFrame = None
    predictions: dict = field(default_factory=dict)

    @property
    def subject_ids(self):
        return set(self.estimates.index)

    def errors(self, strategy):
        """Absolute error per subject for ``strategy``."""
        if strategy not in self.estimates.columns:
            raise ValueError(f"report has no estimates for {strategy}; it covers {self.strategies}")
        return (self.estimates[strategy] - self.estimates["tau_years"]).abs()


def summarize_folds(fold_metrics):
    """Mean and std across folds of each metric, per strategy."""
    grouped = fold_metrics.groupby("strategy")[["mae", "cs", "pearson"]]
    summary = grouped.agg(["mean", "std"])
    summary.columns = [f"{metric}_{stat}" for metric, stat in summary.columns]
    order = [s for s in REPORTED_STRATEGIES if s in summary.index]
    return summary.loc[order]


def cohort_mae_table(estimates, strategies):
    errors = estimates[strategies].sub(estimates["tau_years"], axis=0).abs()
    return errors.assign(cohort=estimates["cohort"]).groupby("cohort").mean()


def build_report(fold_evaluations, manifest, evaluation, config_hash, training_curves=None):
    """
    Aggregate per-fold evaluations into one report.

    Args:
        fold_evaluations (list): FoldEvaluation per evaluated fold
        manifest (pd.DataFrame): Cohort manifest
        evaluation (EvaluationConfig): Evaluation settings
        config_hash (str): Hash of the architecture that produced the estimates
        training_curves (pd.DataFrame): Optional per-epoch training history

    Returns:
        EvalReport: Aggregated report
    """
    subjects = manifest.set_index("id")[SUBJECT_COLUMNS]
    frames, metric_rows, contrasts, relation_rows, predictions = [], [], [], [], {}
    for result in sorted(fold_evaluations, key=lambda r: r.fold):
        truths = subjects.loc[result.estimates.index, "tau_years"]
        metrics = strategy_metrics(result.estimates, truths, evaluation.alpha)
        metric_rows.append(metrics.rename_axis("strategy").reset_index().assign(fold=result.fold))
        frames.append(result.estimates)
        contrasts.append(result.self_vs_cross)
        if result.relation_metrics is not None:
            relation_rows.append(result.relation_metrics)
        if result.predictions is not None:
            predictions[result.fold] = result.predictions

    estimates = subjects.join(pd.concat(frames), how="inner")
    estimates.index.name = "id"
    strategies = [s for s in REPORTED_STRATEGIES if s in estimates.columns]
    fold_metrics = pd.concat(metric_rows, ignore_index=True)[["fold", "strategy", "mae", "cs", "pearson", "n"]]

    spread = uncertainty_table(estimates[strategies])
    correlation = {}
    for column in spread.columns:
        values = spread[column].dropna()
        if len(values) >= 2:
            correlation[column.replace("uncertainty_", "")] = pearson(
                values.to_numpy(), estimates.loc[values.index, "tau_years"].to_numpy()
            )

    self_vs_cross = {}
    for key in {k for c in contrasts for k in c}:
        self_vs_cross[key] = float(np.mean([c[key] for c in contrasts if key in c]))

    return EvalReport(
        config_hash=config_hash,
        alpha=evaluation.alpha,
        strategies=strategies,
        estimates=estimates,
        fold_metrics=fold_metrics,
        summary=summarize_folds(fold_metrics),
        uncertainty=spread.join(estimates["tau_years"]),
        uncertainty_correlation=correlation,
        cohort_mae=cohort_mae_table(estimates, strategies),
        t_tests=strategy_t_tests(estimates[strategies], estimates["tau_years"], evaluation.baseline),
        baseline=evaluation.baseline,
        self_vs_cross=self_vs_cross,
        training_curves=training_curves,
        relation_metrics=(pd.concat(relation_rows, ignore_index=True)[RELATION_METRIC_COLUMNS]
                          if relation_rows else None),
        predictions=predictions,
    )


def relation_mae_table(relation_metrics):
    """Mean MAE across folds, rows pairing mode and columns relation."""
    if relation_metrics is None or relation_metrics.empty:
        return None
    return relation_metrics.groupby(["mode", "relation"])["mae"].mean().unstack("relation")


def _records(frame):
    if frame is None:
        return None
    return json.loads(frame.to_json(orient="index"))


def write_report(report, output_dir, plots=True):
    """
    Write ``report.json`` plus CSV tables and plots into ``output_dir``.

    Returns:
        dict: Name -> path of everything written
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    document = {
        "config_hash": report.config_hash,
        "alpha": report.alpha,
        "strategies": report.strategies,
        "baseline": report.baseline,
        "summary": _records(report.summary),
        "folds": _records(report.fold_metrics.set_index(["fold", "strategy"]).unstack("strategy")["mae"]),
        "uncertainty_vs_age_pearson": report.uncertainty_correlation,
        "uncertainty_mean": {c: float(report.uncertainty[c].mean()) for c in report.uncertainty.columns
                             if c.startswith("uncertainty_")},
        "cohort_mae": _records(report.cohort_mae),
        "t_tests": _records(report.t_tests),
        "self_vs_cross": report.self_vs_cross,
        "relation_mae": _records(relation_mae_table(report.relation_metrics)),
    }
    paths["report"] = output_dir / REPORT_NAME
    paths["report"].write_text(json.dumps(document, indent=2, sort_keys=True))

    tables = {
        "estimates": report.estimates,
        "fold_metrics": report.fold_metrics,
        "cohort_mae": report.cohort_mae,
        "t_tests": report.t_tests,
        "uncertainty": report.uncertainty,
        "scatter": scatter_table(report),
        "training_curves": report.training_curves,
        "relation_metrics": report.relation_metrics,
    }
    for name, frame in tables.items():
        if frame is None:
            continue
        paths[name] = output_dir / f"{name}.csv"
        frame.to_csv(paths[name], index=name not in LONG_TABLES, float_format="%.6f")

    if report.predictions:
        directory = output_dir / PREDICTIONS_DIR
        directory.mkdir(exist_ok=True)
        for fold, frame in sorted(report.predictions.items()):
            paths[f"predictions_fold_{fold}"] = directory / f"fold_{fold}.csv"
            write_predictions(frame, paths[f"predictions_fold_{fold}"])

    if plots:
        paths.update(plot_report(report, output_dir))
    logger.info("Report written to %s", output_dir)
    return paths


def load_report(path):
    """
    Read a report directory (or its ``report.json``) back for comparison.

    Raises:
        FileNotFoundError: If the report or its estimates table is missing
    """
    path = Path(path)
    directory = path.parent if path.suffix == ".json" else path
    document = json.loads((directory / REPORT_NAME).read_text())
    estimates = pd.read_csv(directory / ESTIMATES_NAME, index_col="id", dtype={"id": str, "cohort": str})
    fold_metrics_path = directory / "fold_metrics.csv"
    fold_metrics = pd.read_csv(fold_metrics_path) if fold_metrics_path.exists() else pd.DataFrame()
    relation_metrics_path = directory / "relation_metrics.csv"
    relation_metrics = pd.read_csv(relation_metrics_path) if relation_metrics_path.exists() else None
    summary = pd.DataFrame.from_dict(document["summary"], orient="index")
    return EvalReport(
        config_hash=document["config_hash"],
        alpha=document["alpha"],
        strategies=document["strategies"],
        estimates=estimates,
        fold_metrics=fold_metrics,
        summary=summary,
        uncertainty_correlation=document.get("uncertainty_vs_age_pearson", {}),
        baseline=document.get("baseline", "S4"),
        self_vs_cross=document.get("self_vs_cross", {}),
        relation_metrics=relation_metrics,
    )


def scatter_table(report, strategies=None):
    """Long table of (id, tau_years, strategy, estimate) for scatter plots."""
    strategies = strategies or report.strategies
    long = report.estimates[["tau_years"] + strategies].reset_index().melt(
        id_vars=["id", "tau_years"], var_name="strategy", value_name="estimate"
    )
    return long.dropna(subset=["estimate"])


def plot_report(report, output_dir):
    """Scatter, uncertainty-vs-age and training-curve PNGs."""
    output_dir = Path(output_dir)
    paths = {}
    shown = [s for s in (PRIMARY_STRATEGY, "S9", "S16") if s in report.strategies] or report.strategies[:1]

    fig, ax = plt.subplots(figsize=(6, 6))
    for strategy in shown:
        ax.scatter(report.estimates["tau_years"], report.estimates[strategy], s=6, alpha=0.5, label=strategy)
    top = float(report.estimates["tau_years"].max())
    ax.plot([0, top], [0, top], color="black", linewidth=1)
    ax.set_xlabel("Age (years)")
    ax.set_ylabel("Estimated age (years)")
    ax.set_title("Estimates vs. age")
    ax.legend()
    ax.grid(True, alpha=0.3)
    plt.tight_layout()
    paths["scatter_plot"] = output_dir / "scatter.png"
    fig.savefig(paths["scatter_plot"], dpi=100)
    plt.close(fig)

    columns = [c for c in report.uncertainty.columns if c.startswith("uncertainty_")]
    if columns:
        fig, ax = plt.subplots(figsize=(8, 5))
        for column in columns:
            ax.scatter(report.uncertainty["tau_years"], report.uncertainty[column], s=6, alpha=0.5,
                       label=column.replace("uncertainty_", ""))
        ax.set_xlabel("Age (years)")
        ax.set_ylabel("Uncertainty (years)")
        ax.set_title("Uncertainty vs. age")
        ax.legend()
        ax.grid(True, alpha=0.3)
        plt.tight_layout()
        paths["uncertainty_plot"] = output_dir / "uncertainty.png"
        fig.savefig(paths["uncertainty_plot"], dpi=100)
        plt.close(fig)

    if report.training_curves is not None and not report.training_curves.empty:
        paths["training_plot"] = plot_training_curves(report.training_curves, output_dir / "training_curves.png")
    return paths


def plot_training_curves(curves, output_file):
    """Loss and per-relation validation MAE per epoch, one line per fold and model."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(10, 8), sharex=True)
    val_columns = [c for c in curves.columns if c.startswith("val_mae_")]
    for (fold, model), run in curves.groupby(["fold", "model"]):
        ax1.plot(run["epoch"], run["loss"], label=f"fold {fold} {model}")
        for column in val_columns:
            if run[column].notna().any():
                ax2.plot(run["epoch"], run[column], label=f"fold {fold} {column[len('val_mae_'):]}")
    ax1.set_ylabel("Training loss")
    ax1.set_title("Training curves")
    ax1.grid(True, alpha=0.3)
    ax2.set_xlabel("Epoch")
    ax2.set_ylabel("Validation MAE (years)")
    ax2.grid(True, alpha=0.3)
    if len(curves.groupby(["fold", "model"])) <= 10:
        ax1.legend(fontsize="small")
    plt.tight_layout()
    fig.savefig(output_file, dpi=100)
    plt.close(fig)
    return Path(output_file)


def _compared_strategy(report, strategy):
    return DIRECT_STRATEGY if report.strategies == [DIRECT_STRATEGY] else strategy


def compare_reports(reports, strategy=PRIMARY_STRATEGY, baseline=None, alpha=DEFAULT_ALPHA):
    """
    Compare named reports on one strategy.

    A report holding only direct age estimates is compared on those.

    Args:
        reports (dict): Name -> EvalReport, all on the same subjects
        strategy (str): Strategy whose estimates are compared
        baseline (str): Report the t-tests compare against; the first by default
        alpha (float): CS threshold

    Returns:
        tuple: ``(comparison table, per-cohort MAE table)``; the comparison
        has the compared strategy, MAE/CS/Pearson, t, p, stars and the average
        cohort rank per report

    Raises:
        ValueError: If the reports cover different subjects
    """
    names = list(reports)
    if not names:
        raise ValueError("nothing to compare")
    baseline = baseline or names[0]
    if baseline not in reports:
        raise ValueError(f"baseline {baseline!r} is not among the compared reports {names}")
    reference_ids = reports[baseline].subject_ids
    for name in names:
        if reports[name].subject_ids != reference_ids:
            raise ValueError(f"report {name!r} covers a different subject set than {baseline!r}")

    order = sorted(reference_ids)
    base = reports[baseline]
    base_errors = base.errors(_compared_strategy(base, strategy)).loc[order]
    rows, cohort_columns = {}, {}
    for name in names:
        report = reports[name]
        estimates = report.estimates.loc[order]
        compared = _compared_strategy(report, strategy)
        errors = report.errors(compared).loc[order]
        row = {"strategy": compared}
        row.update(compute_metrics(estimates[compared].to_numpy(), estimates["tau_years"].to_numpy(), alpha).to_dict())
        test = paired_t_test(errors.to_numpy(), base_errors.to_numpy())
        row.update(t=test.t, p=test.p, stars=significance_stars(test.p))
        rows[name] = row
        cohort_columns[name] = errors.groupby(estimates["cohort"]).mean()

    cohort_mae = pd.DataFrame(cohort_columns).T
    table = pd.DataFrame.from_dict(rows, orient="index")
    table["average_rank"] = rank_models(cohort_mae)
    return table, cohort_mae
