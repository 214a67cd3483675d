"""
Reverse-mode automatic differentiation on top of numpy.

A Tensor wraps an ndarray and remembers the Function that produced it. Calling
``backward()`` on a scalar tensor walks the recorded graph in reverse
topological order and accumulates gradients into ``.grad`` of every tensor
that requires them.
"""

import contextlib
import logging
import threading

import numpy as np

from .errors import NumericalError, ShapeError

logger = logging.getLogger(__name__)

_state = threading.local()


def is_grad_enabled():
    """Return True unless the current thread is inside ``no_grad()``."""
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Context manager that disables graph construction for inference."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def unbroadcast(grad, shape):
    """
    Sum out broadcast dimensions so that ``grad`` matches ``shape``.

    Args:
        grad (np.ndarray): Gradient with the broadcast output shape
        shape (tuple): Shape of the input that was broadcast

    Returns:
        np.ndarray: Gradient reduced to ``shape``
    """
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement ``forward`` on raw arrays and ``backward`` returning
    one gradient (or None) per input tensor, in input order.
    """

    def __init__(self, *inputs):
        self.inputs = inputs

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad):
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs, **kwargs):
        """
        Run the forward pass and record the operation on the graph.

        Args:
            *inputs (Tensor): Input tensors
            **kwargs: Non-differentiable arguments forwarded to ``forward``

        Returns:
            Tensor: Output tensor, linked to this function when gradients are needed
        """
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        if not requires_grad:
            # Drop saved activations straight away when no graph is kept.
            return Tensor(out)
        return Tensor(out, requires_grad=True, creator=fn)


class Tensor:
    """
    n-dimensional real array participating in a reverse-mode graph.
    """

    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, creator=None, dtype=None):
        """
        Args:
            data (array-like): Values; integer input is promoted to float64
            requires_grad (bool): Whether gradients should be accumulated here
            creator (Function): Operation that produced this tensor, if any
            dtype: Optional floating dtype to cast to
        """
        array = np.asarray(data, dtype=dtype)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.creator = creator
        self.grad = None

    # ----------------------------------------------------------------- basics

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.item())

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def _wrap(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    # ------------------------------------------------------------- arithmetic

    def __add__(self, other):
        return Add.apply(self, self._wrap(other))

    def __radd__(self, other):
        return Add.apply(self._wrap(other), self)

    def __sub__(self, other):
        return Sub.apply(self, self._wrap(other))

    def __rsub__(self, other):
        return Sub.apply(self._wrap(other), self)

    def __mul__(self, other):
        return Mul.apply(self, self._wrap(other))

    def __rmul__(self, other):
        return Mul.apply(self._wrap(other), self)

    def __truediv__(self, other):
        return Div.apply(self, self._wrap(other))

    def __rtruediv__(self, other):
        return Div.apply(self._wrap(other), self)

    def __neg__(self):
        return Neg.apply(self)

    def __matmul__(self, other):
        return MatMul.apply(self, self._wrap(other))

    def __getitem__(self, index):
        return GetItem.apply(self, index=index)

    def sum(self, axis=None, keepdims=False):
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def abs(self):
        return Abs.apply(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Transpose.apply(self, axes=axes or None)

    @staticmethod
    def concat(tensors, axis=0):
        """Concatenate tensors along ``axis``."""
        return Concat.apply(*tensors, axis=axis)

    # --------------------------------------------------------------- backward

    def _topological_order(self):
        order, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.creator is not None:
                for parent in node.creator.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self):
        """
        Populate ``.grad`` of every tensor this scalar depends on.

        Repeated calls without ``zero_grad`` accumulate.

        Raises:
            ShapeError: If the tensor is not a scalar
            NumericalError: If nothing in the graph requires gradients
        """
        if self.data.size != 1:
            raise ShapeError("backward", "a scalar loss", self.shape)
        if not self.requires_grad:
            raise NumericalError("backward called on a tensor that does not depend on any parameter")

        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topological_order()):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            node.grad = grad if node.grad is None else node.grad + grad
            if node.creator is None:
                continue
            for parent, parent_grad in zip(node.creator.inputs, node.creator.backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = unbroadcast(np.asarray(parent_grad, dtype=parent.dtype), parent.shape)
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad


def as_tensor(value, dtype=None):
    """Return ``value`` unchanged if it is a Tensor, else wrap it."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


# --------------------------------------------------------------------- ops


class Add(Function):
    def forward(self, x, y):
        return x + y

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, x, y):
        return x - y

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, x, y):
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        return grad * self.y, grad * self.x


class Div(Function):
    def forward(self, x, y):
        self.x, self.y = x, y
        return x / y

    def backward(self, grad):
        return grad / self.y, -grad * self.x / (self.y * self.y)


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class Abs(Function):
    def forward(self, x):
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, grad):
        return (grad * self.sign,)


class MatMul(Function):
    """Batched matrix product following numpy ``@`` broadcasting."""

    def forward(self, x, y):
        if x.shape[-1] != y.shape[-2 if y.ndim > 1 else 0]:
            raise ShapeError("matmul", f"inner extent {x.shape[-1]}", y.shape)
        self.x, self.y = x, y
        return x @ y

    def backward(self, grad):
        x, y = self.x, self.y
        if y.ndim == 1:
            grad_x = np.expand_dims(grad, -1) * y
            grad_y = (x * np.expand_dims(grad, -1)).reshape(-1, y.shape[0]).sum(axis=0)
            return grad_x, grad_y
        grad_x = grad @ np.swapaxes(y, -1, -2)
        grad_y = np.swapaxes(x, -1, -2) @ grad
        return grad_x, grad_y


class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.sum(x, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Mean(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        out = np.mean(x, axis=axis, keepdims=keepdims)
        self.count = x.size // max(np.size(out), 1)
        return out

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad / self.count, self.shape).copy(),)


class Reshape(Function):
    def forward(self, x, shape):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x, axes=None):
        self.axes = axes
        return np.transpose(x, axes)

    def backward(self, grad):
        if self.axes is None:
            return (np.transpose(grad),)
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):
    def forward(self, x, index):
        self.shape, self.dtype, self.index = x.shape, x.dtype, index
        return x[index]

    def backward(self, grad):
        full = np.zeros(self.shape, dtype=self.dtype)
        np.add.at(full, self.index, grad)
        return (full,)


class Concat(Function):
    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))
