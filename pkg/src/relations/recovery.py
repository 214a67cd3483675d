"""
Closed-form recovery of per-subject ages from predicted relations.

Strategies are grouped by how the pair was formed:

    paired test pairs (x != y):   S1, S2, ensemble S3   -> estimates for x and y
    reference pairs (y known):    S4 (MC rule, see ``order``), S5-S8, ensemble S9
    self pairs (y == x):          S10-S15, ensemble S16

All functions accept a RelationVector or an array whose last axis holds
(r1, r2, r3, r4), and are vectorized over any leading axes.
"""

from enum import Enum

import numpy as np

from .algebra import RelationVector


class StrategyId(str, Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    S4 = "S4"
    S5 = "S5"
    S6 = "S6"
    S7 = "S7"
    S8 = "S8"
    S9 = "S9"
    S10 = "S10"
    S11 = "S11"
    S12 = "S12"
    S13 = "S13"
    S14 = "S14"
    S15 = "S15"
    S16 = "S16"

    @property
    def mode(self):
        return STRATEGY_MODE[self.value]

    @property
    def is_ensemble(self):
        return self.value in ENSEMBLES


PAIR_STRATEGIES = ("S1", "S2", "S3")
REFERENCE_STRATEGIES = ("S4", "S5", "S6", "S7", "S8", "S9")
SELF_STRATEGIES = ("S10", "S11", "S12", "S13", "S14", "S15", "S16")
ALL_STRATEGIES = PAIR_STRATEGIES + REFERENCE_STRATEGIES + SELF_STRATEGIES
ENSEMBLES = {"S3": ("S1", "S2"), "S9": ("S5", "S6", "S7", "S8"), "S16": SELF_STRATEGIES[:-1]}
STRATEGY_MODE = {
    **{s: "paired" for s in PAIR_STRATEGIES},
    **{s: "reference" for s in REFERENCE_STRATEGIES},
    **{s: "self" for s in SELF_STRATEGIES},
}


def parse_strategies(text):
    """
    Parse "S8,S15" (case-insensitive) into validated strategy names.

    Raises:
        ValueError: On unknown names or an empty selection
    """
    names = [part.strip().upper() for part in str(text).split(",") if part.strip()]
    unknown = [n for n in names if n not in ALL_STRATEGIES]
    if unknown or not names:
        raise ValueError(f"unknown strategies {unknown or text!r}; choose from {', '.join(ALL_STRATEGIES)}")
    return names


def _columns(relations):
    if isinstance(relations, RelationVector):
        relations = relations.as_array()
    values = np.asarray(relations, dtype=np.float64)
    if values.shape[-1] != 4:
        raise ValueError(f"expected relations (r1, r2, r3, r4) on the last axis, got shape {values.shape}")
    return values[..., 0], values[..., 1], values[..., 2], values[..., 3]


def _unwrap(value):
    return float(value) if np.ndim(value) == 0 else value


def recover_pair(relations):
    """
    Estimate both ages of a test pair.

    S2 assigns r3 to x when r2 > 0; at r2 == 0 (and below) x takes r4.

    Returns:
        dict: strategy -> ``(tau_x, tau_y)`` for S1, S2, S3
    """
    r1, r2, r3, r4 = _columns(relations)
    s1 = ((r1 + r2) / 2.0, (r1 - r2) / 2.0)
    positive = r2 > 0
    s2 = (np.where(positive, r3, r4), np.where(positive, r4, r3))
    s3 = ((s1[0] + s2[0]) / 2.0, (s1[1] + s2[1]) / 2.0)
    return {name: (_unwrap(x), _unwrap(y)) for name, (x, y) in zip(PAIR_STRATEGIES, (s1, s2, s3))}


def recover_with_reference(relations, tau_y):
    """
    Estimate the age of x from a pair with a reference y of known age.

    Returns:
        dict: strategy -> tau_x for S5-S9
    """
    r1, r2, r3, r4 = _columns(relations)
    tau_y = np.asarray(tau_y, dtype=np.float64)
    estimates = {
        "S5": r1 - tau_y,
        "S6": r2 + tau_y,
        "S7": (r1 + r2) / 2.0,
        "S8": r3 + r4 - tau_y,
    }
    estimates["S9"] = (estimates["S5"] + estimates["S6"] + estimates["S7"] + estimates["S8"]) / 4.0
    return {name: _unwrap(value) for name, value in estimates.items()}


def recover_self(relations):
    """
    Estimate the age of x from the pair (x, x).

    Returns:
        dict: strategy -> tau_x for S10-S16
    """
    r1, r2, r3, r4 = _columns(relations)
    estimates = {
        "S10": r1 / 2.0,
        "S11": (r1 + r2) / 2.0,
        "S12": (r1 - r2) / 2.0,
        "S13": r3,
        "S14": r4,
        "S15": (r3 + r4) / 2.0,
    }
    estimates["S16"] = sum(estimates.values()) / 6.0
    return {name: _unwrap(value) for name, value in estimates.items()}


def clamp_estimates(values, max_age):
    """Clip estimates to [0, A]; estimates are reported raw unless asked."""
    return np.clip(values, 0.0, max_age)
