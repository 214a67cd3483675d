"""
Ordinal view of the difference relation and the maximum-consistency (MC)
estimator built on it.

A predicted r2 is binarized against a threshold t into a verdict
(greater / similar / smaller). Given verdicts against references of known
age, the MC rule returns the candidate age that agrees with the most verdicts.
"""

import logging
from enum import IntEnum

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 5.0


class Order(IntEnum):
    SMALLER = -1
    SIMILAR = 0
    GREATER = 1


def _check_threshold(t):
    if t < 0:
        raise ValueError(f"threshold t must be non-negative, got {t}")


def binarize_relation(r2, t=DEFAULT_THRESHOLD):
    """
    Args:
        r2 (float): Predicted signed difference tau_x - tau_y in years
        t (float): Similarity threshold in years

    Returns:
        Order: GREATER if r2 > t, SIMILAR if |r2| <= t, SMALLER if r2 < -t

    Raises:
        ValueError: If t is negative
    """
    _check_threshold(t)
    if r2 > t:
        return Order.GREATER
    if r2 < -t:
        return Order.SMALLER
    return Order.SIMILAR


def binarize_relations(r2, t=DEFAULT_THRESHOLD):
    """Vectorized ``binarize_relation`` returning integer Order codes."""
    _check_threshold(t)
    r2 = np.asarray(r2, dtype=np.float64)
    return np.where(r2 > t, int(Order.GREATER), np.where(r2 < -t, int(Order.SMALLER), int(Order.SIMILAR)))


def consistency_counts(reference_ages, verdicts, t, age_grid):
    """
    Number of verdicts each candidate age agrees with.

    Returns:
        np.ndarray: Counts with the shape of ``age_grid``
    """
    refs = np.asarray(reference_ages, dtype=np.float64)[None, :]
    codes = np.asarray(verdicts, dtype=np.int64)[None, :]
    gap = np.asarray(age_grid, dtype=np.float64)[:, None] - refs
    agree = (
        ((codes == Order.GREATER) & (gap > t))
        | ((codes == Order.SIMILAR) & (np.abs(gap) <= t))
        | ((codes == Order.SMALLER) & (gap < -t))
    )
    return agree.sum(axis=1)


def age_grid_for(max_age):
    """Integer candidate ages 0..A."""
    return np.arange(0, int(np.floor(max_age)) + 1, dtype=np.float64)


def mc_estimate(comparisons, t=DEFAULT_THRESHOLD, age_grid=None, max_age=100.0):
    """
    Maximum-consistency age estimate.

    Args:
        comparisons (list): ``(reference age, Order)`` tuples
        t (float): Similarity threshold in years
        age_grid (array-like): Candidate ages; defaults to the integers 0..max_age
        max_age (float): Maximum age A, used for the default grid

    Returns:
        float: The smallest candidate age among the maximizers

    Raises:
        ValueError: If ``comparisons`` is empty or t is negative
    """
    if not comparisons:
        raise ValueError("mc_estimate needs at least one comparison")
    _check_threshold(t)
    grid = age_grid_for(max_age) if age_grid is None else np.asarray(age_grid, dtype=np.float64)
    ages, verdicts = zip(*comparisons)
    counts = consistency_counts(ages, verdicts, t, grid)
    # argmax returns the first maximizer, i.e. the smallest age on a sorted grid
    order = np.argsort(grid, kind="stable")
    return float(grid[order][np.argmax(counts[order])])


def mc_estimate_brute_force(comparisons, t=DEFAULT_THRESHOLD, age_grid=None, max_age=100.0):
    """Loop-by-loop MC rule used to cross-check ``mc_estimate``."""
    if not comparisons:
        raise ValueError("mc_estimate needs at least one comparison")
    grid = age_grid_for(max_age) if age_grid is None else age_grid
    best_age, best_score = None, -1
    for candidate in sorted(float(a) for a in grid):
        score = 0
        for reference_age, verdict in comparisons:
            gap = candidate - reference_age
            score += int(
                (verdict == Order.GREATER and gap > t)
                or (verdict == Order.SIMILAR and abs(gap) <= t)
                or (verdict == Order.SMALLER and gap < -t)
            )
        if score > best_score:
            best_age, best_score = candidate, score
    return best_age


def mc_estimates(reference_ages, r2_hat, t=DEFAULT_THRESHOLD, age_grid=None, max_age=100.0):
    """
    MC estimates for many subjects at once.

    Args:
        reference_ages (array-like): ``(M,)`` reference ages
        r2_hat (array-like): ``(S, M)`` predicted r2 of each subject against each reference
        t (float): Similarity threshold
        age_grid (array-like): Candidate ages, sorted ascending

    Returns:
        np.ndarray: ``(S,)`` estimates
    """
    _check_threshold(t)
    r2_hat = np.atleast_2d(np.asarray(r2_hat, dtype=np.float64))
    if r2_hat.shape[1] == 0:
        raise ValueError("mc_estimate needs at least one comparison")
    grid = np.sort(age_grid_for(max_age) if age_grid is None else np.asarray(age_grid, dtype=np.float64))
    codes = binarize_relations(r2_hat, t)
    estimates = np.empty(r2_hat.shape[0])
    for row, subject_codes in enumerate(codes):
        counts = consistency_counts(reference_ages, subject_codes, t, grid)
        estimates[row] = grid[np.argmax(counts)]
    return estimates
