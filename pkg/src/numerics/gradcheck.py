"""
Central finite-difference gradient checking.
"""

import numpy as np

from .tensor import Tensor

DEFAULT_STEP = 1e-5


def numerical_gradient(loss_fn, tensors, step=DEFAULT_STEP):
    """
    Central-difference gradient of ``loss_fn()`` with respect to each tensor.

    Args:
        loss_fn (callable): Returns a scalar Tensor computed from ``tensors``
        tensors (list): Tensors whose ``data`` is perturbed in place
        step (float): Finite-difference step

    Returns:
        list: One ndarray per tensor
    """
    grads = []
    for tensor in tensors:
        grad = np.zeros_like(tensor.data, dtype=np.float64)
        flat = tensor.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            upper = loss_fn().item()
            flat[i] = original - step
            lower = loss_fn().item()
            flat[i] = original
            grad.reshape(-1)[i] = (upper - lower) / (2.0 * step)
        grads.append(grad)
    return grads


def max_relative_error(analytic, numeric, floor=1e-4):
    """Largest elementwise ``|a - n| / max(|a| + |n|, floor)``."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def check_gradients(loss_fn, tensors, step=DEFAULT_STEP):
    """
    Compare analytic and numerical gradients.

    Args:
        loss_fn (callable): Returns a scalar Tensor computed from ``tensors``
        tensors (list): Leaf tensors with ``requires_grad=True``

    Returns:
        float: Maximum relative error over all tensors
    """
    for tensor in tensors:
        tensor.zero_grad()
    loss_fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    numeric = numerical_gradient(loss_fn, tensors, step)
    return max(max_relative_error(a, n) for a, n in zip(analytic, numeric))


def random_projection(output, rng):
    """Scalar ``sum(output * w)`` with fixed random weights, for generic checks."""
    weights = Tensor(rng.normal(size=output.shape), dtype=output.dtype)
    return (output * weights).sum()
