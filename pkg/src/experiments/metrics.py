"""
Accuracy metrics for age estimates and the strategy-spread uncertainty.
"""

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

DEFAULT_ALPHA = 5.0
# Strategies whose spread defines the per-subject uncertainty of each mode
UNCERTAINTY_GROUPS = {
    "paired": ("S1", "S2"),
    "reference": ("S5", "S6", "S7", "S8"),
    "self": ("S10", "S11", "S12", "S13", "S14", "S15"),
}


@dataclass
class Metrics:
    mae: float
    cs: float
    pearson: float
    n: int

    def to_dict(self):
        return asdict(self)


def _paired_arrays(estimates, truths):
    estimates = np.asarray(estimates, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if estimates.shape != truths.shape:
        raise ValueError(f"{estimates.size} estimates but {truths.size} truths")
    if estimates.size == 0:
        raise ValueError("metrics need at least one estimate")
    return estimates, truths


def mean_absolute_error(estimates, truths):
    estimates, truths = _paired_arrays(estimates, truths)
    return float(np.mean(np.abs(estimates - truths)))


def cumulative_score(estimates, truths, alpha=DEFAULT_ALPHA):
    """Percentage of estimates within ``alpha`` years of the truth."""
    estimates, truths = _paired_arrays(estimates, truths)
    return float(np.mean(np.abs(estimates - truths) <= alpha) * 100.0)


def pearson(a, b):
    """
    Pearson correlation; NaN when either side is constant.

    Raises:
        ValueError: On a length mismatch or fewer than two values
    """
    a, b = _paired_arrays(a, b)
    if a.size < 2:
        raise ValueError("Pearson correlation needs at least two values")
    a, b = a - a.mean(), b - b.mean()
    denominator = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if denominator == 0:
        return float("nan")
    return float(np.clip(np.sum(a * b) / denominator, -1.0, 1.0))


def compute_metrics(estimates, truths, alpha=DEFAULT_ALPHA):
    """
    MAE in years, CS(alpha) in percent and the Pearson correlation.

    Returns:
        Metrics: Summary of the estimates
    """
    estimates, truths = _paired_arrays(estimates, truths)
    return Metrics(
        mae=mean_absolute_error(estimates, truths),
        cs=cumulative_score(estimates, truths, alpha),
        pearson=pearson(estimates, truths),
        n=int(estimates.size),
    )


def uncertainty(estimates):
    """
    Population standard deviation of one subject's estimates across strategies.

    Raises:
        ValueError: With fewer than two estimates
    """
    values = np.asarray(estimates, dtype=np.float64)
    if values.size < 2:
        raise ValueError("uncertainty needs at least two estimates")
    return float(np.std(values))


def uncertainty_table(estimates):
    """
    Per-subject uncertainty of every mode present in a wide estimates table.

    Args:
        estimates (pd.DataFrame): Index id, strategy columns

    Returns:
        pd.DataFrame: Index id, one ``uncertainty_<mode>`` column per mode
    """
    columns = {}
    for mode, group in UNCERTAINTY_GROUPS.items():
        if all(s in estimates.columns for s in group):
            columns[f"uncertainty_{mode}"] = estimates[list(group)].std(axis=1, ddof=0)
    return pd.DataFrame(columns, index=estimates.index)


def strategy_metrics(estimates, truths, alpha=DEFAULT_ALPHA):
    """
    Metrics of every strategy column.

    Args:
        estimates (pd.DataFrame): Index id, strategy columns
        truths (pd.Series): Ages indexed by id

    Returns:
        pd.DataFrame: Index strategy, columns mae/cs/pearson/n
    """
    rows = {}
    for strategy in estimates.columns:
        column = estimates[strategy].dropna()
        if column.empty:
            continue
        rows[strategy] = compute_metrics(column.to_numpy(), truths.loc[column.index].to_numpy(), alpha).to_dict()
    return pd.DataFrame.from_dict(rows, orient="index")
