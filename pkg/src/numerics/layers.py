"""
Layer operations with analytic backward rules.

Convolution and max pooling work on channel-first arrays ``(N, C, *spatial)``
with two or three spatial axes. Shape rules are exposed separately so a whole
network can be traced without computing anything.
"""

import itertools
import logging
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Function, Tensor, as_tensor

logger = logging.getLogger(__name__)

POOL_KERNEL = 2
POOL_STRIDE = 2
BATCH_NORM_EPS = 1e-5
LAYER_NORM_EPS = 1e-5
SPATIAL_DIMS = (2, 3)


class LayerKind(str, Enum):
    CONV = "conv"
    MAX_POOL = "max_pool"
    BATCH_NORM = "batch_norm"
    RELU = "relu"
    LINEAR = "linear"
    SOFTMAX = "softmax"
    LAYER_NORM = "layer_norm"


# ------------------------------------------------------------- shape rules


def _check_spatial(what, shape):
    spatial = len(shape) - 2
    if spatial not in SPATIAL_DIMS:
        raise ShapeError(what, "(N, C) plus 2 or 3 spatial extents", tuple(shape))
    return spatial


def conv_output_shape(input_shape, out_channels, kernel_size, padding):
    """
    Output shape of a stride-1 convolution.

    Args:
        input_shape (tuple): ``(N, C, *spatial)``
        out_channels (int): Number of output channels
        kernel_size (int): Cubic kernel extent
        padding (int): Zero padding on each side of every spatial axis

    Returns:
        tuple: ``(N, out_channels, *spatial_out)``
    """
    _check_spatial("conv input", input_shape)
    spatial = tuple(s + 2 * padding - kernel_size + 1 for s in input_shape[2:])
    if min(spatial) < 1:
        raise ShapeError("conv output", "positive spatial extents", spatial,
                         hint="input is smaller than the kernel")
    return (input_shape[0], out_channels) + spatial


def pool_output_shape(input_shape):
    """
    Output shape of a kernel-2 stride-2 max pool (floor division).

    Raises:
        ShapeError: If any spatial extent collapses to 0
    """
    _check_spatial("max_pool input", input_shape)
    spatial = tuple(s // POOL_STRIDE for s in input_shape[2:])
    if min(spatial) < 1:
        raise ShapeError("max_pool output", "positive spatial extents", spatial,
                         hint="input too small for the number of pooling stages; use a larger image")
    return tuple(input_shape[:2]) + spatial


# --------------------------------------------------------------- functions


class Conv(Function):
    """Stride-1 N-d convolution via sliding windows and one matrix product."""

    def forward(self, x, weight, bias, padding=0):
        spatial = _check_spatial("conv input", x.shape)
        if weight.ndim != x.ndim or weight.shape[1] != x.shape[1]:
            raise ShapeError("conv weight", f"(C_out, {x.shape[1]}, k x{spatial})", weight.shape)
        kernel = weight.shape[2:]
        out_shape = conv_output_shape(x.shape, weight.shape[0], kernel[0], padding)
        pad = [(0, 0), (0, 0)] + [(padding, padding)] * spatial
        padded = np.pad(x, pad) if padding else x
        axes = tuple(range(2, 2 + spatial))
        windows = sliding_window_view(padded, kernel, axis=axes)
        # (N, C, *out, *k) -> (N, *out, C, *k)
        order = (0,) + tuple(range(2, 2 + spatial)) + (1,) + tuple(range(2 + spatial, 2 + 2 * spatial))
        cols = windows.transpose(order).reshape(-1, int(np.prod(weight.shape[1:])))
        w_mat = weight.reshape(weight.shape[0], -1)
        out = cols @ w_mat.T + bias
        out = out.reshape((x.shape[0],) + out_shape[2:] + (weight.shape[0],))

        self.cols, self.w_mat = cols, w_mat
        self.weight_shape, self.padded_shape = weight.shape, padded.shape
        self.out_spatial, self.padding, self.spatial = out_shape[2:], padding, spatial
        return np.moveaxis(out, -1, 1)

    def backward(self, grad):
        spatial, out_spatial = self.spatial, self.out_spatial
        n, c_out = grad.shape[:2]
        g_mat = np.moveaxis(grad, 1, -1).reshape(-1, c_out)
        grad_w = (g_mat.T @ self.cols).reshape(self.weight_shape)
        grad_b = g_mat.sum(axis=0)

        kernel = self.weight_shape[2:]
        c_in = self.weight_shape[1]
        d_cols = (g_mat @ self.w_mat).reshape((n,) + out_spatial + (c_in,) + kernel)
        grad_padded = np.zeros(self.padded_shape, dtype=grad.dtype)
        lead = (slice(None),) * (1 + spatial) + (slice(None),)
        for offset in itertools.product(*(range(k) for k in kernel)):
            target = (slice(None), slice(None)) + tuple(
                slice(o, o + extent) for o, extent in zip(offset, out_spatial)
            )
            grad_padded[target] += np.moveaxis(d_cols[lead + offset], -1, 1)
        p = self.padding
        if p:
            grad_x = grad_padded[(slice(None), slice(None)) + (slice(p, -p),) * spatial]
        else:
            grad_x = grad_padded
        return grad_x, grad_w, grad_b


class MaxPool(Function):
    """Kernel-2 stride-2 max pooling; trailing odd rows are dropped."""

    def forward(self, x):
        out_shape = pool_output_shape(x.shape)
        spatial = x.ndim - 2
        out_spatial = out_shape[2:]
        cropped = x[(slice(None), slice(None)) + tuple(slice(0, 2 * o) for o in out_spatial)]
        split = cropped.reshape(out_shape[:2] + tuple(v for o in out_spatial for v in (o, POOL_KERNEL)))
        # (N, C, o0, 2, o1, 2, ...) -> (N, C, o0, o1, ..., 2, 2, ...)
        order = (0, 1) + tuple(2 + 2 * i for i in range(spatial)) + tuple(3 + 2 * i for i in range(spatial))
        windows = split.transpose(order).reshape(out_shape + (POOL_KERNEL ** spatial,))
        self.argmax = windows.argmax(axis=-1)
        self.input_shape, self.out_shape, self.order = x.shape, out_shape, order
        self.cropped_shape, self.split_shape = cropped.shape, split.shape
        return np.take_along_axis(windows, self.argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        spatial = len(self.out_shape) - 2
        windows = np.zeros(self.out_shape + (POOL_KERNEL ** spatial,), dtype=grad.dtype)
        np.put_along_axis(windows, self.argmax[..., None], grad[..., None], axis=-1)
        transposed_shape = tuple(self.split_shape[i] for i in self.order)
        split = windows.reshape(transposed_shape).transpose(np.argsort(self.order))
        cropped = split.reshape(self.cropped_shape)
        if cropped.shape == self.input_shape:
            return (cropped,)
        full = np.zeros(self.input_shape, dtype=grad.dtype)
        full[tuple(slice(0, e) for e in cropped.shape)] = cropped
        return (full,)


class BatchNorm(Function):
    """Training-mode batch normalization over every axis except channels."""

    def forward(self, x, gamma, beta, eps=BATCH_NORM_EPS):
        if x.ndim < 2 or gamma.shape != (x.shape[1],):
            raise ShapeError("batch_norm scale", (x.shape[1] if x.ndim > 1 else "C",), gamma.shape)
        if x.shape[0] < 2:
            raise ShapeError("batch_norm input", "batch size >= 2 in training mode", x.shape[0],
                             hint="switch the model to eval mode or use a larger batch")
        axes = (0,) + tuple(range(2, x.ndim))
        view = (1, -1) + (1,) * (x.ndim - 2)
        self.mean = x.mean(axis=axes)
        self.var = x.var(axis=axes)
        self.inv_std = 1.0 / np.sqrt(self.var + eps)
        self.x_hat = (x - self.mean.reshape(view)) * self.inv_std.reshape(view)
        self.gamma, self.axes, self.view = gamma, axes, view
        self.count = x.size // x.shape[1]
        return gamma.reshape(view) * self.x_hat + beta.reshape(view)

    def backward(self, grad):
        axes, view = self.axes, self.view
        grad_gamma = (grad * self.x_hat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        d_hat = grad * self.gamma.reshape(view)
        grad_x = (self.inv_std.reshape(view) / self.count) * (
            self.count * d_hat
            - d_hat.sum(axis=axes).reshape(view)
            - self.x_hat * (d_hat * self.x_hat).sum(axis=axes).reshape(view)
        )
        return grad_x, grad_gamma, grad_beta


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad):
        return (grad * self.mask,)


class Linear(Function):
    """Affine map on the last axis: ``x @ weight + bias``."""

    def forward(self, x, weight, bias):
        if x.shape[-1] != weight.shape[0] or bias.shape != (weight.shape[1],):
            raise ShapeError("linear input", f"last extent {weight.shape[0]}", x.shape)
        self.x, self.weight = x, weight
        return x @ weight + bias

    def backward(self, grad):
        features_in, features_out = self.weight.shape
        flat_x = self.x.reshape(-1, features_in)
        flat_g = grad.reshape(-1, features_out)
        return grad @ self.weight.T, flat_x.T @ flat_g, flat_g.sum(axis=0)


class Softmax(Function):
    def forward(self, x, axis=-1):
        shifted = np.exp(x - x.max(axis=axis, keepdims=True))
        self.out = shifted / shifted.sum(axis=axis, keepdims=True)
        self.axis = axis
        return self.out

    def backward(self, grad):
        dot = (grad * self.out).sum(axis=self.axis, keepdims=True)
        return (self.out * (grad - dot),)


class LayerNorm(Function):
    """Normalization over the last axis with learned scale and shift."""

    def forward(self, x, gamma, beta, eps=LAYER_NORM_EPS):
        if gamma.shape != (x.shape[-1],):
            raise ShapeError("layer_norm scale", (x.shape[-1],), gamma.shape)
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = (x - mean) * self.inv_std
        self.gamma = gamma
        return gamma * self.x_hat + beta

    def backward(self, grad):
        d = self.x_hat.shape[-1]
        grad_gamma = (grad * self.x_hat).reshape(-1, d).sum(axis=0)
        grad_beta = grad.reshape(-1, d).sum(axis=0)
        d_hat = grad * self.gamma
        grad_x = self.inv_std * (
            d_hat
            - d_hat.mean(axis=-1, keepdims=True)
            - self.x_hat * (d_hat * self.x_hat).mean(axis=-1, keepdims=True)
        )
        return grad_x, grad_gamma, grad_beta


# ------------------------------------------------------------- public API


def conv(x, weight, bias, padding=None):
    """Stride-1 convolution; ``padding`` defaults to "same" (kernel // 2)."""
    if padding is None:
        padding = as_tensor(weight).shape[-1] // 2
    return Conv.apply(x, weight, bias, padding=padding)


def max_pool(x):
    return MaxPool.apply(x)


def batch_norm(x, gamma, beta, running_mean=None, running_var=None, training=True, eps=BATCH_NORM_EPS):
    """
    Batch normalization.

    In training mode batch statistics are used; otherwise the running
    statistics are applied as constants.
    """
    if training:
        return BatchNorm.apply(x, gamma, beta, eps=eps)
    view = (1, -1) + (1,) * (x.ndim - 2)
    inv_std = (1.0 / np.sqrt(running_var + eps)).astype(x.dtype)
    centered = x - Tensor(running_mean.reshape(view).astype(x.dtype))
    return centered * (gamma.reshape(view) * Tensor(inv_std.reshape(view))) + beta.reshape(view)


def relu(x):
    return ReLU.apply(x)


def linear(x, weight, bias):
    return Linear.apply(x, weight, bias)


def softmax(x, axis=-1):
    return Softmax.apply(x, axis=axis)


def layer_norm(x, gamma, beta, eps=LAYER_NORM_EPS):
    return LayerNorm.apply(x, gamma, beta, eps=eps)


def layer_forward(kind, x, params=None):
    """
    Apply one layer of the given kind.

    Args:
        kind (LayerKind or str): Which layer to apply
        x (Tensor): Input tensor
        params (dict): Layer parameters, e.g. ``weight``/``bias`` for conv and
            linear, ``gamma``/``beta`` (and running statistics) for the norms,
            ``axis`` for softmax

    Returns:
        Tensor: Layer output
    """
    kind = LayerKind(kind)
    params = params or {}
    x = as_tensor(x)
    if kind is LayerKind.CONV:
        return conv(x, params["weight"], params["bias"], params.get("padding"))
    if kind is LayerKind.MAX_POOL:
        return max_pool(x)
    if kind is LayerKind.BATCH_NORM:
        return batch_norm(
            x, params["gamma"], params["beta"],
            running_mean=params.get("running_mean"),
            running_var=params.get("running_var"),
            training=params.get("training", True),
        )
    if kind is LayerKind.RELU:
        return relu(x)
    if kind is LayerKind.LINEAR:
        return linear(x, params["weight"], params["bias"])
    if kind is LayerKind.SOFTMAX:
        return softmax(x, axis=params.get("axis", -1))
    return layer_norm(x, params["gamma"], params["beta"])
