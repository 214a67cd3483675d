"""
Relations between the ages of two subjects.

For an ordered pair (x, y) with ages in [0, A]:

    r1 = tau_x + tau_y          in [0, 2A]
    r2 = tau_x - tau_y          in [-A, A]
    r3 = max(tau_x, tau_y)      in [0, A]
    r4 = min(tau_x, tau_y)      in [0, A]

The product (r5) and quotient (r6) are also defined but have ranges too wide
to train against, so they only exist in ``extended_relations``.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

RELATION_NAMES = ("r1", "r2", "r3", "r4")


class Relation(str, Enum):
    SUM = "r1"
    DIFFERENCE = "r2"
    MAX = "r3"
    MIN = "r4"
    PRODUCT = "r5"
    QUOTIENT = "r6"

    @property
    def trainable(self):
        return self.value in RELATION_NAMES


class RelationKind(str, Enum):
    GROUND_TRUTH = "ground_truth"
    PREDICTED = "predicted"


@dataclass(frozen=True)
class RelationVector:
    """
    The four relations of one ordered pair, in years.

    Ground-truth vectors satisfy ``r3 >= r4``, ``r1 == r3 + r4`` and
    ``|r2| == r3 - r4``; predicted vectors are unconstrained.
    """

    r1: float
    r2: float
    r3: float
    r4: float
    kind: RelationKind = RelationKind.PREDICTED

    def as_array(self):
        return np.array([self.r1, self.r2, self.r3, self.r4], dtype=np.float64)

    @classmethod
    def from_array(cls, values, kind=RelationKind.PREDICTED):
        r1, r2, r3, r4 = (float(v) for v in values)
        return cls(r1, r2, r3, r4, RelationKind(kind))

    def swapped(self):
        """Relations of the reversed pair (y, x)."""
        return RelationVector(self.r1, -self.r2, self.r3, self.r4, self.kind)

    def is_consistent(self, tol=0.0):
        return (
            self.r3 >= self.r4 - tol
            and abs(self.r1 - (self.r3 + self.r4)) <= tol
            and abs(abs(self.r2) - (self.r3 - self.r4)) <= tol
        )


def check_ages(values, max_age, name):
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)) or np.any(values < 0) or np.any(values > max_age):
        bad = values[~((values >= 0) & (values <= max_age))]
        raise ValueError(f"{name} must lie in [0, {max_age}] years, got {bad.ravel()[:3].tolist()}")
    return values


def ground_truth_relations(tau_x, tau_y, max_age):
    """
    Exact relations of the pair (x, y).

    Args:
        tau_x (float): Age of x in years
        tau_y (float): Age of y in years
        max_age (float): Maximum age A

    Returns:
        RelationVector: Ground-truth relations

    Raises:
        ValueError: If either age is outside [0, A]
    """
    tau_x = float(check_ages(tau_x, max_age, "tau_x"))
    tau_y = float(check_ages(tau_y, max_age, "tau_y"))
    return RelationVector(
        tau_x + tau_y, tau_x - tau_y, max(tau_x, tau_y), min(tau_x, tau_y), RelationKind.GROUND_TRUTH
    )


def relation_targets(tau_x, tau_y, max_age, subset=RELATION_NAMES):
    """
    Vectorized ground truth for training batches.

    Args:
        tau_x (array-like): Ages of the x inputs, shape ``(N,)``
        tau_y (array-like): Ages of the y inputs, shape ``(N,)``
        max_age (float): Maximum age A
        subset (sequence): Relation names to return, in order

    Returns:
        np.ndarray: ``(N, len(subset))`` relations
    """
    tau_x = check_ages(tau_x, max_age, "tau_x")
    tau_y = check_ages(tau_y, max_age, "tau_y")
    columns = {
        "r1": tau_x + tau_y,
        "r2": tau_x - tau_y,
        "r3": np.maximum(tau_x, tau_y),
        "r4": np.minimum(tau_x, tau_y),
    }
    unknown = [name for name in subset if name not in columns]
    if unknown:
        raise ValueError(f"unknown relations {unknown}; trainable relations are {RELATION_NAMES}")
    return np.stack([columns[name] for name in subset], axis=-1)


def extended_relations(tau_x, tau_y):
    """
    All six relations as a name -> value dict. The quotient is NaN for
    ``tau_y == 0``.
    """
    tau_x, tau_y = float(tau_x), float(tau_y)
    return {
        Relation.SUM.value: tau_x + tau_y,
        Relation.DIFFERENCE.value: tau_x - tau_y,
        Relation.MAX.value: max(tau_x, tau_y),
        Relation.MIN.value: min(tau_x, tau_y),
        Relation.PRODUCT.value: tau_x * tau_y,
        Relation.QUOTIENT.value: tau_x / tau_y if tau_y else float("nan"),
    }


def relation_bounds(name, max_age):
    """Closed range ``(low, high)`` of a trainable relation for ages in [0, A]."""
    bounds = {
        "r1": (0.0, 2.0 * max_age),
        "r2": (-float(max_age), float(max_age)),
        "r3": (0.0, float(max_age)),
        "r4": (0.0, float(max_age)),
    }
    if name not in bounds:
        raise ValueError(f"relation {name!r} has no training range")
    return bounds[name]


def relation_midpoint(name, max_age):
    low, high = relation_bounds(name, max_age)
    return 0.5 * (low + high)
