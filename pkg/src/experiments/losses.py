"""
Relation losses and the learning modes that decide how many models are
trained and which relations each one predicts.

The "direct" mode is the baseline without relation learning: one model
regresses the age of a single image under the same L1 loss.
"""

from dataclasses import dataclass

from model.configs import AGE_TARGET, RELATION_ORDER
from numerics.errors import ConfigError, ShapeError
from numerics.tensor import as_tensor

LOSS_MODES = {
    "joint": [list(RELATION_ORDER)],
    "pair": [["r1", "r2"], ["r3", "r4"]],
    "single": [[name] for name in RELATION_ORDER],
    "direct": [[AGE_TARGET]],
}


@dataclass
class LossConfig:
    """
    Attributes:
        mode (str): "joint" (one model, K=4), "pair" (two models, K=2),
            "single" (four models, K=1) or "direct" (one single-image age model)
    """

    mode: str = "joint"

    def validate(self):
        if self.mode not in LOSS_MODES:
            raise ConfigError(f"loss.mode must be one of {tuple(LOSS_MODES)}, got {self.mode!r}")
        return self

    @property
    def direct(self):
        return self.mode == "direct"

    def model_subsets(self):
        """Relation subset of each model, in training order."""
        return model_subsets(self.mode)


def model_subsets(mode):
    if mode not in LOSS_MODES:
        raise ConfigError(f"unknown learning mode {mode!r}; expected one of {tuple(LOSS_MODES)}")
    return [list(subset) for subset in LOSS_MODES[mode]]


def relation_loss(pred, truth):
    """
    Batch mean of the absolute error, summed over relations.

    Args:
        pred (Tensor): ``(N, K)`` predicted relations
        truth (array-like or Tensor): ``(N, K)`` ground truth in the same order

    Returns:
        Tensor: Scalar loss

    Raises:
        ShapeError: If the shapes differ
    """
    truth = as_tensor(truth, dtype=pred.dtype)
    if pred.shape != truth.shape:
        raise ShapeError("relation_loss", pred.shape, truth.shape)
    return (pred - truth).abs().mean(axis=0).sum()
