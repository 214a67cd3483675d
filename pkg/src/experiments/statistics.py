"""
Paired significance testing and cross-cohort ranking of models.
"""

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from scipy.special import betainc

SIGNIFICANCE_LEVELS = ((0.0001, "****"), (0.001, "***"), (0.01, "**"), (0.05, "*"))


@dataclass
class TTestResult:
    t: float
    p: float
    n: int
    mean_difference: float

    def to_dict(self):
        return asdict(self)


def student_t_two_sided(t, df):
    """
    Two-sided tail probability ``P(|T| >= |t|)`` for ``df`` degrees of freedom,
    via the regularized incomplete beta function.
    """
    if np.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_t_test(errors_a, errors_b):
    """
    Two-sided paired t-test on per-subject absolute errors.

    Differences are ``a - b``. Identical differences give t=0, p=1 when their
    mean is zero and p=0 otherwise.

    Args:
        errors_a (array-like): Absolute errors of the first method
        errors_b (array-like): Absolute errors of the second, same subjects and order

    Returns:
        TTestResult: Statistic, p-value, sample size and mean difference

    Raises:
        ValueError: On a length mismatch or fewer than two pairs
    """
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"paired t-test needs equal lengths, got {a.size} and {b.size}")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, p=1.0, n=n, mean_difference=0.0)
        return TTestResult(t=float(np.copysign(np.inf, mean)), p=0.0, n=n, mean_difference=mean)
    t = mean / (sd / np.sqrt(n))
    return TTestResult(t=float(t), p=student_t_two_sided(t, n - 1), n=n, mean_difference=mean)


def significance_stars(p):
    """"****" for p < 0.0001 down to "*" for p < 0.05, else ""."""
    for level, stars in SIGNIFICANCE_LEVELS:
        if p < level:
            return stars
    return ""


def strategy_t_tests(estimates, truths, baseline="S4"):
    """
    Paired t-test of every strategy's absolute errors against ``baseline``.

    Only subjects estimated by both strategies are compared.

    Returns:
        pd.DataFrame: Index strategy, columns t/p/n/mean_difference/stars
    """
    if baseline not in estimates.columns:
        return pd.DataFrame(columns=["t", "p", "n", "mean_difference", "stars"])
    errors = (estimates.sub(truths.loc[estimates.index], axis=0)).abs()
    rows = {}
    for strategy in estimates.columns:
        if strategy == baseline:
            continue
        both = errors[[strategy, baseline]].dropna()
        if len(both) < 2:
            continue
        result = paired_t_test(both[strategy], both[baseline]).to_dict()
        result["stars"] = significance_stars(result["p"])
        rows[strategy] = result
    return pd.DataFrame.from_dict(rows, orient="index")


def rank_models(per_cohort_mae):
    """
    Average rank of each model across cohorts.

    Args:
        per_cohort_mae (pd.DataFrame): Rows models, columns cohorts

    Returns:
        pd.Series: Mean rank per model (1 is best; ties share the mean rank)

    Raises:
        ValueError: If any entry is missing
    """
    table = pd.DataFrame(per_cohort_mae)
    if table.isna().any().any():
        raise ValueError("rank_models needs an MAE for every model and cohort")
    return table.rank(axis=0, method="average", ascending=True).mean(axis=1)
