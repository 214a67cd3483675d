"""
k-fold assignment.
"""

import logging

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

DEFAULT_FOLDS = 5


def make_folds(ids, k=DEFAULT_FOLDS, seed=0):
    """
    Assign each subject to one of ``k`` folds of near-equal size.

    The ids are shuffled with ``seed`` and the subject at shuffled position
    ``i`` goes to fold ``i % k``, so fold sizes differ by at most one.

    Args:
        ids (sequence): Unique subject ids
        k (int): Number of folds
        seed: Shuffle seed

    Returns:
        pd.Series: Fold per id, indexed by id in the given order

    Raises:
        ValueError: If k < 2, ids repeat, or there are fewer ids than folds
    """
    ids = list(ids)
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    if len(ids) < k:
        raise ValueError(f"cannot split {len(ids)} subjects into {k} folds")
    if len(set(ids)) != len(ids):
        raise ValueError("subject ids must be unique")
    order = np.random.default_rng(seed).permutation(len(ids))
    folds = np.empty(len(ids), dtype=np.int64)
    folds[order] = np.arange(len(ids)) % k
    return pd.Series(folds, index=pd.Index(ids, name="id"), name="fold")


def fold_sizes(folds, k=None):
    """Subjects per fold, ordered by fold index."""
    counts = pd.Series(folds).value_counts().sort_index()
    if k is not None:
        counts = counts.reindex(range(k), fill_value=0)
    return counts.tolist()


def split_fold(manifest, fold):
    """``(train, held_out)`` manifest views for one fold."""
    held_out = manifest["fold"] == fold
    if not held_out.any():
        raise ValueError(f"fold {fold} has no subjects")
    return manifest[~held_out].reset_index(drop=True), manifest[held_out].reset_index(drop=True)
