"""
Minimal tensor library: reverse-mode autodiff, layer operations, modules,
Adam with a halving schedule, and checkpoint containers.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import ConfigError, NumericalError, PairAgeError, ShapeError
from .layers import LayerKind, conv_output_shape, layer_forward, pool_output_shape
from .modules import BatchNorm, Conv, LayerNorm, Linear, MaxPool, Module, Parameter, ReLU, Sequential
from .optim import Adam, AdamState, adam_step, scheduled_lr
from .tensor import Tensor, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "BatchNorm",
    "Checkpoint",
    "ConfigError",
    "Conv",
    "LayerKind",
    "LayerNorm",
    "Linear",
    "MaxPool",
    "Module",
    "NumericalError",
    "PairAgeError",
    "Parameter",
    "ReLU",
    "Sequential",
    "ShapeError",
    "Tensor",
    "adam_step",
    "conv_output_shape",
    "layer_forward",
    "load_checkpoint",
    "no_grad",
    "pool_output_shape",
    "save_checkpoint",
    "scheduled_lr",
]
