"""
Training, evaluation and cross-validation of relation models.
"""

from .cross_validation import CVConfig, run_cv, run_fold
from .evaluation import EvaluationConfig, evaluate_fold, random_matching
from .losses import LOSS_MODES, LossConfig, model_subsets, relation_loss
from .metrics import Metrics, compute_metrics, cumulative_score, pearson, uncertainty, uncertainty_table
from .predictor import AgePredictor, RelationPredictor, checkpoint_name, load_predictor
from .reporting import EvalReport, build_report, compare_reports, load_report, write_report
from .statistics import TTestResult, paired_t_test, rank_models, significance_stars, student_t_two_sided
from .training import TrainingConfig, train_fold, train_model

__all__ = [
    "AgePredictor",
    "CVConfig",
    "EvalReport",
    "EvaluationConfig",
    "LOSS_MODES",
    "LossConfig",
    "Metrics",
    "RelationPredictor",
    "TTestResult",
    "TrainingConfig",
    "build_report",
    "checkpoint_name",
    "compare_reports",
    "compute_metrics",
    "cumulative_score",
    "evaluate_fold",
    "load_predictor",
    "load_report",
    "model_subsets",
    "paired_t_test",
    "pearson",
    "random_matching",
    "rank_models",
    "relation_loss",
    "run_cv",
    "run_fold",
    "significance_stars",
    "student_t_two_sided",
    "train_fold",
    "train_model",
    "uncertainty",
    "uncertainty_table",
    "write_report",
]
