"""
Adam optimizer with a step-halving learning-rate schedule.

The schedule halves the learning rate every ``half_period`` epochs:
``lr = base_lr * 0.5 ** (epoch // half_period)``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_BASE_LR = 1e-4
DEFAULT_HALF_PERIOD = 35
DEFAULT_EPOCHS = 80


@dataclass
class AdamState:
    """Moments and step counter for a set of named parameters."""

    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    base_lr: float = DEFAULT_BASE_LR


def scheduled_lr(base_lr, epoch, half_period=DEFAULT_HALF_PERIOD):
    """
    Effective learning rate for a (0-based) epoch.

    Args:
        base_lr (float): Learning rate of the first period
        epoch (int): Current epoch
        half_period (int): Epochs between halvings

    Returns:
        float: ``base_lr * 0.5 ** floor(epoch / half_period)``
    """
    if half_period < 1:
        raise ConfigError(f"half_period must be >= 1, got {half_period}")
    return base_lr * 0.5 ** (epoch // half_period)


def adam_step(params, state, epoch, half_period=DEFAULT_HALF_PERIOD):
    """
    Apply one Adam update in place.

    Args:
        params (dict): name -> Parameter with populated ``.grad``
        state (AdamState): Optimizer state, updated in place
        epoch (int): Current epoch, selects the scheduled learning rate
        half_period (int): Epochs between learning-rate halvings

    Returns:
        tuple: ``(params, state)``

    Raises:
        NumericalError: If a parameter has no gradient
    """
    lr = scheduled_lr(state.base_lr, epoch, half_period)
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise NumericalError(f"no gradient for parameter '{missing[0]}' ({len(missing)} missing)")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        grad = p.grad
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p.dtype)
        state.first_moment[name] = m.astype(p.dtype)
        state.second_moment[name] = v.astype(p.dtype)
    return params, state


class Adam:
    """
    Stateful wrapper around ``adam_step`` bound to a model's parameters.
    """

    def __init__(self, named_params, base_lr=DEFAULT_BASE_LR, half_period=DEFAULT_HALF_PERIOD,
                 beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = dict(named_params)
        self.half_period = half_period
        self.state = AdamState(beta1=beta1, beta2=beta2, epsilon=epsilon, base_lr=base_lr)

    def lr(self, epoch):
        return scheduled_lr(self.state.base_lr, epoch, self.half_period)

    def step(self, epoch):
        adam_step(self.params, self.state, epoch, self.half_period)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self):
        s = self.state
        return {
            "step_count": s.step_count,
            "beta1": s.beta1,
            "beta2": s.beta2,
            "epsilon": s.epsilon,
            "base_lr": s.base_lr,
            "half_period": self.half_period,
            "first_moment": {k: v.copy() for k, v in s.first_moment.items()},
            "second_moment": {k: v.copy() for k, v in s.second_moment.items()},
        }

    def load_state_dict(self, state):
        self.half_period = int(state.get("half_period", self.half_period))
        self.state = AdamState(
            step_count=int(state["step_count"]),
            first_moment={k: np.asarray(v).copy() for k, v in state["first_moment"].items()},
            second_moment={k: np.asarray(v).copy() for k, v in state["second_moment"].items()},
            beta1=float(state["beta1"]),
            beta2=float(state["beta2"]),
            epsilon=float(state["epsilon"]),
            base_lr=float(state["base_lr"]),
        )
