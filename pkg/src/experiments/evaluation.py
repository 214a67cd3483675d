"""
Held-out evaluation of a trained fold under the three pairing modes.

paired     each held-out subject is matched with another held-out subject
           (one random perfect matching per pairing seed) -> S1-S3
reference  every held-out subject is paired with every reference drawn from
           the training folds -> S4 (MC rule) and S5-S9
self       every held-out subject is paired with itself -> S10-S16

A direct (single-image) model skips pairing and estimates every held-out
subject once, reported as the "direct" strategy.
Backbone features are computed once per image; only the heads run per pair.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from model.configs import RELATION_ORDER
from numerics.errors import ConfigError
from relations.algebra import relation_targets
from relations.estimation import estimate_subjects
from relations.io import PREDICTION_COLUMNS, RELATION_HAT_COLUMNS
from relations.order import DEFAULT_THRESHOLD
from relations.recovery import ALL_STRATEGIES, STRATEGY_MODE, clamp_estimates
from relations.reference import DEFAULT_PER_BIN, select_references

from .metrics import DEFAULT_ALPHA, compute_metrics
from .predictor import AgePredictor

logger = logging.getLogger(__name__)

EVALUATION_MODES = ("paired", "reference", "self")
DIRECT_STRATEGY = "direct"
REPORTED_STRATEGIES = ALL_STRATEGIES + (DIRECT_STRATEGY,)
# Entropy slots for evaluation draws, apart from training streams
_PAIRING_STREAM = 2_000_003
_REFERENCE_STREAM = 3_000_017


@dataclass
class EvaluationConfig:
    """
    Attributes:
        alpha (float): CS threshold in years
        threshold (float): MC binarization threshold t in years
        references_per_bin (int): References per integer age bin
        pairing_seeds (int): Random perfect matchings in paired mode
        strategies (list): Strategies to report; all when empty
        modes (list): Pairing modes to run
        baseline (str): Strategy the t-tests compare against
        clamp (bool): Clip estimates to [0, A]
        batch_size (int): Images or pairs per inference batch
    """

    alpha: float = DEFAULT_ALPHA
    threshold: float = DEFAULT_THRESHOLD
    references_per_bin: int = DEFAULT_PER_BIN
    pairing_seeds: int = 1
    strategies: list = field(default_factory=list)
    modes: list = field(default_factory=lambda: list(EVALUATION_MODES))
    baseline: str = "S4"
    clamp: bool = False
    batch_size: int = 256

    def validate(self):
        if self.alpha < 0 or self.threshold < 0:
            raise ConfigError("evaluation.alpha and evaluation.threshold must be non-negative")
        if self.pairing_seeds < 1 or self.references_per_bin < 1 or self.batch_size < 1:
            raise ConfigError("evaluation.pairing_seeds, references_per_bin and batch_size must be positive")
        unknown = [m for m in self.modes if m not in EVALUATION_MODES]
        if unknown or not self.modes:
            raise ConfigError(f"evaluation.modes must be a non-empty subset of {EVALUATION_MODES}")
        bad = [s for s in self.strategies if s not in ALL_STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies {bad}")
        if self.baseline not in ALL_STRATEGIES:
            raise ConfigError(f"evaluation.baseline must be a strategy name, got {self.baseline!r}")
        return self

    def selected_strategies(self):
        """Strategies reported under the configured modes."""
        chosen = self.strategies or list(ALL_STRATEGIES)
        return [s for s in chosen if STRATEGY_MODE[s] in self.modes]


@dataclass
class FoldEvaluation:
    fold: int
    predictions: pd.DataFrame
    estimates: pd.DataFrame
    references: pd.DataFrame = None
    self_vs_cross: dict = field(default_factory=dict)
    relation_metrics: pd.DataFrame = None


def random_matching(n, rng):
    """
    Pairs of a random perfect matching over ``range(n)``.

    With odd ``n`` the leftover subject is paired with a random other one.

    Returns:
        tuple: ``(x index, y index)`` arrays
    """
    if n < 2:
        raise ValueError("paired evaluation needs at least two held-out subjects")
    order = rng.permutation(n)
    half = n // 2
    x, y = order[0:2 * half:2], order[1:2 * half:2]
    if n % 2:
        leftover = order[-1]
        partner = order[rng.integers(n - 1)]
        x, y = np.append(x, leftover), np.append(y, partner)
    return x, y


def _frame(mode, x_ids, y_ids, relations, y_ages=None, start=0):
    frame = pd.DataFrame(relations, columns=RELATION_HAT_COLUMNS)
    frame.insert(0, "pair_id", [f"{mode[0]}{start + i:07d}" for i in range(len(frame))])
    frame.insert(1, "x_id", np.asarray(x_ids))
    frame.insert(2, "y_id", np.asarray(y_ids))
    frame["mode"] = mode
    frame["y_tau_years"] = np.nan if y_ages is None else np.asarray(y_ages, dtype=np.float64)
    return frame


def predict_fold(predictor, train_rows, held_rows, train_images, held_images, evaluation, seed_key):
    """
    Relation predictions for every configured pairing mode.

    Returns:
        tuple: ``(predictions DataFrame, ReferenceSet or None)``
    """
    held_ids = held_rows["id"].to_numpy()
    held_features = predictor.features(held_images, "x")
    frames, references = [], None

    if "paired" in evaluation.modes:
        held_features_y = predictor.features(held_images, "y")
        for pairing in range(evaluation.pairing_seeds):
            rng = np.random.default_rng(list(seed_key) + [_PAIRING_STREAM, pairing])
            x, y = random_matching(len(held_rows), rng)
            relations = predictor.relate(held_features, held_features_y, x, y)
            frames.append(_frame("paired", held_ids[x], held_ids[y], relations,
                                 start=sum(len(f) for f in frames)))

    if "reference" in evaluation.modes:
        references = select_references(train_rows, evaluation.references_per_bin,
                                       seed=list(seed_key) + [_REFERENCE_STREAM])
        lookup = pd.Series(np.arange(len(train_rows)), index=train_rows["id"].to_numpy())
        ref_positions = lookup.loc[references.ids].to_numpy()
        ref_features = predictor.features(train_images[ref_positions], "y")
        x = np.repeat(np.arange(len(held_rows)), len(references))
        y = np.tile(np.arange(len(references)), len(held_rows))
        relations = predictor.relate(held_features, ref_features, x, y)
        frames.append(_frame("reference", held_ids[x], np.asarray(references.ids)[y], relations,
                             y_ages=references.ages[y], start=sum(len(f) for f in frames)))

    if "self" in evaluation.modes:
        index = np.arange(len(held_rows))
        held_features_y = predictor.features(held_images, "y")
        relations = predictor.relate(held_features, held_features_y, index, index)
        frames.append(_frame("self", held_ids, held_ids, relations, start=sum(len(f) for f in frames)))

    return pd.concat(frames, ignore_index=True), references


def self_vs_cross(predictions):
    """
    Mean |r2_hat| on self pairs and on paired (cross) pairs.

    A well-trained model predicts smaller differences for (x, x).
    """
    result = {}
    for mode, key in (("self", "self_mean_abs_r2"), ("paired", "cross_mean_abs_r2")):
        rows = predictions[predictions["mode"] == mode]
        if len(rows):
            result[key] = float(rows["r2_hat"].abs().mean())
    return result


def relation_metrics(predictions, ages, max_age, alpha=DEFAULT_ALPHA):
    """
    Accuracy of each predicted relation against the ground truth of its pair.

    Args:
        predictions (pd.DataFrame): Relation predictions with a ``mode`` column
        ages (pd.Series): Ages indexed by subject id
        max_age (float): Maximum age A
        alpha (float): CS threshold in years

    Returns:
        pd.DataFrame: One row per (mode, relation) with mae/cs/pearson/n
    """
    rows = []
    for mode, group in predictions.groupby("mode", sort=False):
        if len(group) < 2:
            logger.warning("Skipping relation metrics of %s pairs: only %d pair", mode, len(group))
            continue
        truth = relation_targets(ages.loc[group["x_id"]].to_numpy(), ages.loc[group["y_id"]].to_numpy(),
                                 max_age, RELATION_ORDER)
        for index, name in enumerate(RELATION_ORDER):
            metrics = compute_metrics(group[f"{name}_hat"].to_numpy(), truth[:, index], alpha)
            rows.append({"mode": mode, "relation": name, **metrics.to_dict()})
    return pd.DataFrame(rows, columns=["mode", "relation", "mae", "cs", "pearson", "n"])


def _evaluate_direct(predictor, held_rows, held_images, fold, evaluation, max_age):
    ages = predictor.predict_ages(held_images)
    if evaluation.clamp:
        ages = clamp_estimates(ages, max_age)
    estimates = pd.DataFrame({DIRECT_STRATEGY: ages}, index=pd.Index(held_rows["id"], name="id"))
    logger.info("Fold %d: direct estimates for %d held-out subjects", fold, len(held_rows))
    return FoldEvaluation(fold=fold, predictions=None, estimates=estimates)


def evaluate_fold(predictor, manifest, images, fold, evaluation, max_age, seed):
    """
    Evaluate one trained fold.

    Args:
        predictor (RelationPredictor or AgePredictor): Models trained without ``fold``
        manifest (pd.DataFrame): Full cohort manifest
        images (np.ndarray): Images aligned with ``manifest`` rows
        fold (int): Held-out fold
        evaluation (EvaluationConfig): Evaluation settings
        max_age (float): Maximum age A
        seed (int): Run seed

    Returns:
        FoldEvaluation: Predictions and per-subject estimates
    """
    held_out = (manifest["fold"] == fold).to_numpy()
    train_rows = manifest[~held_out].reset_index(drop=True)
    held_rows = manifest[held_out].reset_index(drop=True)
    if held_rows.empty:
        raise ValueError(f"fold {fold} has no held-out subjects")
    if isinstance(predictor, AgePredictor):
        return _evaluate_direct(predictor, held_rows, images[held_out], fold, evaluation, max_age)

    predictions, references = predict_fold(
        predictor, train_rows, held_rows, images[~held_out], images[held_out], evaluation, (seed, fold)
    )
    estimates = estimate_subjects(
        predictions, max_age=max_age, threshold=evaluation.threshold,
        strategies=evaluation.selected_strategies(), clamp=evaluation.clamp,
    )
    estimates = estimates.reindex(held_rows["id"])
    logger.info("Fold %d: %d pairs predicted for %d held-out subjects", fold, len(predictions), len(held_rows))
    return FoldEvaluation(
        fold=fold,
        predictions=predictions[PREDICTION_COLUMNS + ["mode", "y_tau_years"]],
        estimates=estimates,
        references=references.to_frame() if references is not None else None,
        self_vs_cross=self_vs_cross(predictions),
        relation_metrics=relation_metrics(
            predictions, manifest.set_index("id")["tau_years"], max_age, evaluation.alpha
        ).assign(fold=fold),
    )
