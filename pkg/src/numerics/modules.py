"""
Parameter containers and layer modules built on the layer operations.

Modules discover their parameters and sub-modules from instance attributes in
assignment order, so parameter names are stable across runs and checkpoints
stay portable.
"""

import logging

import numpy as np

from . import layers
from .errors import ConfigError, ShapeError
from .tensor import Tensor

logger = logging.getLogger(__name__)

BATCH_NORM_MOMENTUM = 0.1


class Parameter(Tensor):
    """A trainable tensor."""

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """
    Base class for everything with parameters.

    Sub-modules may be stored directly or inside lists/tuples. Buffers are
    non-trainable arrays (e.g. running statistics) registered by name.
    """

    def __init__(self):
        self.training = True
        self._buffers = {}

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def output_shape(self, input_shape):
        """Shape produced for ``input_shape`` without computing anything."""
        return tuple(input_shape)

    # --------------------------------------------------------------- traversal

    def _children(self):
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{index}", item

    def named_modules(self, prefix=""):
        seen = set()

        def walk(module, path):
            if id(module) in seen:
                return
            seen.add(id(module))
            yield path, module
            for name, child in module._children():
                yield from walk(child, f"{path}.{name}" if path else name)

        yield from walk(self, prefix)

    def named_parameters(self):
        """
        Yield ``(name, Parameter)`` pairs; shared parameters appear once.
        """
        seen = set()
        for path, module in self.named_modules():
            for name, value in vars(module).items():
                if isinstance(value, Parameter) and id(value) not in seen:
                    seen.add(id(value))
                    yield (f"{path}.{name}" if path else name), value

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self):
        for path, module in self.named_modules():
            for name, value in module._buffers.items():
                yield (f"{path}.{name}" if path else name), value

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters()))

    # ------------------------------------------------------------------- modes

    def train(self, mode=True):
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    # ------------------------------------------------------------------- state

    def state_dict(self):
        """Return a name -> array copy of all parameters and buffers."""
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state):
        """
        Copy arrays from ``state`` into parameters and buffers.

        Raises:
            ConfigError: If names are missing or unexpected
            ShapeError: If an array has the wrong shape
        """
        own = dict(self.named_parameters())
        buffers = {}
        for path, module in self.named_modules():
            for name in module._buffers:
                buffers[f"{path}.{name}" if path else name] = (module, name)
        expected = set(own) | set(buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            unexpected = sorted(set(state) - expected)
            raise ConfigError(f"state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, param in own.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise ShapeError(f"parameter '{name}'", param.shape, value.shape)
            param.data = value.astype(param.dtype).copy()
        for name, (module, key) in buffers.items():
            module._buffers[key] = np.asarray(state[name]).astype(module._buffers[key].dtype).copy()


class Sequential(Module):
    def __init__(self, *modules):
        super().__init__()
        self.layers = list(modules)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def output_shape(self, input_shape):
        for layer in self.layers:
            input_shape = layer.output_shape(input_shape)
        return input_shape


class Conv(Module):
    """
    Stride-1 convolution with "same" padding and fan-in scaled normal init.

    With ``bias=False`` the offset is a constant zero and not a parameter, as
    wanted in front of batch norm, which removes any per-channel offset.
    """

    def __init__(self, in_channels, out_channels, kernel_size, spatial_dims, rng, dtype=np.float32, bias=True):
        super().__init__()
        if spatial_dims not in layers.SPATIAL_DIMS:
            raise ConfigError(f"spatial_dims must be one of {layers.SPATIAL_DIMS}, got {spatial_dims}")
        self.kernel_size = kernel_size
        self.padding = kernel_size // 2
        shape = (out_channels, in_channels) + (kernel_size,) * spatial_dims
        fan_in = in_channels * kernel_size ** spatial_dims
        self.weight = Parameter(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape), dtype=dtype)
        if bias:
            self.bias = Parameter(np.zeros(out_channels), dtype=dtype)
        else:
            self.bias = None
            self._zero_bias = Tensor(np.zeros(out_channels), dtype=dtype)

    def forward(self, x):
        bias = self._zero_bias if self.bias is None else self.bias
        return layers.conv(x, self.weight, bias, self.padding)

    def output_shape(self, input_shape):
        return layers.conv_output_shape(input_shape, self.weight.shape[0], self.kernel_size, self.padding)


class MaxPool(Module):
    def forward(self, x):
        return layers.max_pool(x)

    def output_shape(self, input_shape):
        return layers.pool_output_shape(input_shape)


class BatchNorm(Module):
    """Batch normalization with running statistics for evaluation."""

    def __init__(self, channels, dtype=np.float32, momentum=BATCH_NORM_MOMENTUM, eps=layers.BATCH_NORM_EPS):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels), dtype=dtype)
        self.beta = Parameter(np.zeros(channels), dtype=dtype)
        self._buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self._buffers["running_var"] = np.ones(channels, dtype=dtype)

    def forward(self, x):
        if not self.training:
            return layers.batch_norm(
                x, self.gamma, self.beta,
                running_mean=self._buffers["running_mean"],
                running_var=self._buffers["running_var"],
                training=False, eps=self.eps,
            )
        out = layers.batch_norm(x, self.gamma, self.beta, training=True, eps=self.eps)
        fn = out.creator
        if fn is not None:
            self._update_running_stats(fn.mean, fn.var, fn.count)
        else:
            axes = (0,) + tuple(range(2, x.ndim))
            self._update_running_stats(x.data.mean(axis=axes), x.data.var(axis=axes), x.size // x.shape[1])
        return out

    def _update_running_stats(self, mean, var, count):
        unbiased = var * count / max(count - 1, 1)
        m = self.momentum
        self._buffers["running_mean"] = ((1 - m) * self._buffers["running_mean"] + m * mean).astype(self.gamma.dtype)
        self._buffers["running_var"] = ((1 - m) * self._buffers["running_var"] + m * unbiased).astype(self.gamma.dtype)


class ReLU(Module):
    def forward(self, x):
        return layers.relu(x)


class Linear(Module):
    """Affine layer with symmetric uniform fan-in initialization."""

    def __init__(self, features_in, features_out, rng, dtype=np.float32, zero_init=False):
        super().__init__()
        bound = 1.0 / np.sqrt(features_in)
        if zero_init:
            weight = np.zeros((features_in, features_out))
        else:
            weight = rng.uniform(-bound, bound, size=(features_in, features_out))
        self.weight = Parameter(weight, dtype=dtype)
        self.bias = Parameter(
            np.zeros(features_out) if zero_init else rng.uniform(-bound, bound, size=features_out),
            dtype=dtype,
        )

    def forward(self, x):
        return layers.linear(x, self.weight, self.bias)

    def output_shape(self, input_shape):
        return tuple(input_shape[:-1]) + (self.weight.shape[1],)


class LayerNorm(Module):
    def __init__(self, features, dtype=np.float32):
        super().__init__()
        self.gamma = Parameter(np.ones(features), dtype=dtype)
        self.beta = Parameter(np.zeros(features), dtype=dtype)

    def forward(self, x):
        return layers.layer_norm(x, self.gamma, self.beta)
