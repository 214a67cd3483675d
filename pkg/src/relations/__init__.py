"""
Relation algebra, recovery strategies S1-S16, the MC rule and the standalone
estimation layer.
"""

from .algebra import (
    RELATION_NAMES,
    Relation,
    RelationKind,
    RelationVector,
    extended_relations,
    ground_truth_relations,
    relation_bounds,
    relation_midpoint,
    relation_targets,
)
from .estimation import estimate_subjects, infer_modes
from .io import PREDICTION_COLUMNS, read_predictions, write_predictions
from .order import Order, binarize_relation, binarize_relations, mc_estimate, mc_estimate_brute_force, mc_estimates
from .recovery import (
    ALL_STRATEGIES,
    ENSEMBLES,
    PAIR_STRATEGIES,
    REFERENCE_STRATEGIES,
    SELF_STRATEGIES,
    StrategyId,
    clamp_estimates,
    parse_strategies,
    recover_pair,
    recover_self,
    recover_with_reference,
)
from .reference import ReferenceSet, select_references

__all__ = [
    "ALL_STRATEGIES",
    "ENSEMBLES",
    "PAIR_STRATEGIES",
    "PREDICTION_COLUMNS",
    "REFERENCE_STRATEGIES",
    "RELATION_NAMES",
    "SELF_STRATEGIES",
    "Order",
    "ReferenceSet",
    "Relation",
    "RelationKind",
    "RelationVector",
    "StrategyId",
    "binarize_relation",
    "binarize_relations",
    "clamp_estimates",
    "estimate_subjects",
    "extended_relations",
    "ground_truth_relations",
    "infer_modes",
    "mc_estimate",
    "mc_estimate_brute_force",
    "mc_estimates",
    "parse_strategies",
    "read_predictions",
    "recover_pair",
    "recover_self",
    "recover_with_reference",
    "relation_bounds",
    "relation_midpoint",
    "relation_targets",
    "select_references",
    "write_predictions",
]
