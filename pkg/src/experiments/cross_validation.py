"""
k-fold cross-validation driver: train on k-1 folds, evaluate the held-out
fold under every pairing mode, and aggregate the folds into one report.

Folds are independent, so they can run in worker processes. Each worker
loads the cohort itself; results are gathered in fold order, which keeps the
report identical to a serial run.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from data_processing.data_processor import CohortDataProcessor
from data_processing.folds import DEFAULT_FOLDS
from numerics.errors import ConfigError

from .evaluation import evaluate_fold
from .predictor import load_predictor
from .reporting import build_report
from .training import train_fold

logger = logging.getLogger(__name__)


@dataclass
class CVConfig:
    """
    Attributes:
        k (int): Number of folds the manifest is split into
        folds (list): Folds to run; all k when empty
    """

    k: int = DEFAULT_FOLDS
    folds: list = field(default_factory=list)

    def validate(self):
        if self.k < 2:
            raise ConfigError(f"cv.k must be at least 2, got {self.k}")
        bad = [f for f in self.folds if not 0 <= int(f) < self.k]
        if bad:
            raise ConfigError(f"cv.folds {bad} are outside 0..{self.k - 1}")
        return self

    def selected_folds(self):
        return sorted(int(f) for f in self.folds) if self.folds else list(range(self.k))


@dataclass
class FoldOutcome:
    fold: int
    evaluation: object
    curves: pd.DataFrame = None


def load_cohort(config):
    """Manifest and stacked images of the configured cohort."""
    processor = CohortDataProcessor(config.data_dir)
    manifest = processor.read_manifest()
    if manifest["fold"].nunique() != config.cv.k:
        logger.warning("Manifest has %d folds but cv.k is %d", manifest["fold"].nunique(), config.cv.k)
    return manifest, processor.load_images(manifest)


def run_fold(config, fold, output_dir, train=True, resume=False, cohort=None):
    """
    Train (or load) and evaluate one fold.

    Args:
        config (RunConfig): Run configuration
        fold (int): Held-out fold
        output_dir (Path): Run directory
        train (bool): Train the models; otherwise load their checkpoints
        resume (bool): Continue training from existing checkpoints
        cohort (tuple): Preloaded ``(manifest, images)``

    Returns:
        FoldOutcome: Evaluation and training curves of the fold
    """
    manifest, images = cohort if cohort is not None else load_cohort(config)
    curves = None
    if train:
        predictor, curves = train_fold(config, manifest, images, fold, output_dir, resume=resume)
    else:
        predictor = load_predictor(Path(output_dir) / f"fold_{fold}", config)
    evaluation = evaluate_fold(
        predictor, manifest, images, fold, config.evaluation, config.generator.max_age, config.seed
    )
    return FoldOutcome(fold=fold, evaluation=evaluation, curves=curves)


def _run_fold_worker(args):
    config, fold, output_dir, train, resume = args
    return run_fold(config, fold, output_dir, train=train, resume=resume)


def run_cv(config, output_dir, workers=1, train=True, resume=False):
    """
    Cross-validate the configured model.

    Args:
        config (RunConfig): Run configuration
        output_dir (Path): Run directory for checkpoints and reports
        workers (int): Fold-level worker processes
        train (bool): Train each fold; otherwise evaluate existing checkpoints
        resume (bool): Continue training from existing checkpoints

    Returns:
        EvalReport: Report over all selected folds

    Raises:
        NumericalError: If any fold's training produces a non-finite loss
    """
    folds = config.cv.selected_folds()
    logger.info("Cross-validating %d fold(s) with %d worker(s)", len(folds), workers)
    if workers > 1 and len(folds) > 1:
        jobs = [(config, fold, output_dir, train, resume) for fold in folds]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_fold_worker, jobs))
        manifest, _ = load_cohort(config)
    else:
        cohort = load_cohort(config)
        manifest = cohort[0]
        outcomes = [run_fold(config, fold, output_dir, train=train, resume=resume, cohort=cohort)
                    for fold in folds]

    curves = [o.curves for o in outcomes if o.curves is not None]
    return build_report(
        [o.evaluation for o in outcomes],
        manifest,
        config.evaluation,
        config.config_hash(),
        training_curves=pd.concat(curves, ignore_index=True) if curves else None,
    )
