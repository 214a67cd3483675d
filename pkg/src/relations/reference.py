"""
Reference sets: training subjects of known age that test subjects are paired
with for reference-based recovery.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

DEFAULT_PER_BIN = 2


@dataclass
class ReferenceSet:
    """
    Attributes:
        ids (list): Subject ids
        ages (np.ndarray): Ages in years, aligned with ``ids``
        policy (dict): How the set was drawn
    """

    ids: list
    ages: np.ndarray
    policy: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ages = np.asarray(self.ages, dtype=np.float64)
        if len(self.ids) != len(self.ages):
            raise ValueError(f"reference ids ({len(self.ids)}) and ages ({len(self.ages)}) differ in length")

    def __len__(self):
        return len(self.ids)

    def to_frame(self):
        return pd.DataFrame({"id": self.ids, "tau_years": self.ages})


def select_references(subjects, per_bin=DEFAULT_PER_BIN, seed=0):
    """
    Draw at most ``per_bin`` subjects from each integer age bin.

    Args:
        subjects (pd.DataFrame): Candidate subjects with ``id`` and ``tau_years``
        per_bin (int): Maximum references per integer age
        seed: Seed for the draw within each bin

    Returns:
        ReferenceSet: Selected references ordered by age then id

    Raises:
        ValueError: If there are no candidates or ``per_bin`` < 1
    """
    if per_bin < 1:
        raise ValueError(f"per_bin must be at least 1, got {per_bin}")
    if len(subjects) == 0:
        raise ValueError("cannot draw references from an empty subject table")
    rng = np.random.default_rng(seed)
    candidates = subjects.sort_values("id").reset_index(drop=True)
    bins = np.floor(candidates["tau_years"].to_numpy()).astype(int)
    chosen = []
    for _, group in candidates.groupby(bins, sort=True):
        take = min(per_bin, len(group))
        chosen.append(group.iloc[rng.choice(len(group), size=take, replace=False)])
    selected = pd.concat(chosen).sort_values(["tau_years", "id"])
    logger.info("Selected %d references from %d candidates (%d per age bin)",
                len(selected), len(subjects), per_bin)
    return ReferenceSet(
        ids=selected["id"].tolist(),
        ages=selected["tau_years"].to_numpy(),
        policy={"per_bin": per_bin, "bin_width_years": 1, "seed": seed},
    )
