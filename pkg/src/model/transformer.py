"""
Pre-norm transformer encoder used to fuse the paired token sequence.
"""

import logging

import numpy as np

from numerics import layers
from numerics.errors import ConfigError, ShapeError
from numerics.modules import LayerNorm, Linear, Module

from .tokens import TokenSequence

logger = logging.getLogger(__name__)


def attention(q, k, v):
    """
    Scaled dot-product attention ``softmax(q k^T / sqrt(d)) v``.

    Tokens are rows: ``q`` is ``(..., n, d)``, ``k`` and ``v`` are ``(..., m, d)``.

    Returns:
        tuple: ``(output (..., n, d), weights (..., n, m))``
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError("attention", f"q/k width {q.shape[-1]} and k/v length {k.shape[-2]}",
                         (q.shape, k.shape, v.shape))
    d = q.shape[-1]
    axes = tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)
    scores = (q @ k.transpose(axes)) * (1.0 / np.sqrt(d))
    weights = layers.softmax(scores, axis=-1)
    return weights @ v, weights


class MultiHeadSelfAttention(Module):
    def __init__(self, d, num_heads, rng, dtype=np.float32):
        super().__init__()
        if d % num_heads:
            raise ConfigError(f"token width {d} is not divisible by {num_heads} heads")
        self.num_heads = num_heads
        self.head_dim = d // num_heads
        self.query = Linear(d, d, rng, dtype)
        self.key = Linear(d, d, rng, dtype)
        self.value = Linear(d, d, rng, dtype)
        self.project = Linear(d, d, rng, dtype)
        self.last_weights = None

    def _split(self, x):
        n, length, _ = x.shape
        return x.reshape(n, length, self.num_heads, self.head_dim).transpose(0, 2, 1, 3)

    def forward(self, x):
        n, length, d = x.shape
        out, weights = attention(self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x)))
        self.last_weights = weights.data
        merged = out.transpose(0, 2, 1, 3).reshape(n, length, d)
        return self.project(merged)


class FeedForward(Module):
    """Two affine layers with ReLU in between; the output layer starts at zero."""

    def __init__(self, d, hidden, rng, dtype=np.float32):
        super().__init__()
        self.expand = Linear(d, hidden, rng, dtype)
        self.contract = Linear(hidden, d, rng, dtype, zero_init=True)

    def forward(self, x):
        return self.contract(layers.relu(self.expand(x)))


class EncoderBlock(Module):
    """
    ``x + attn(norm(x))`` then ``x + ffn(norm(x))``.

    The feed-forward branch ends in a zero-initialized projection, so a freshly
    built block only adds the attention branch to its input.
    """

    def __init__(self, d, num_heads, ffn_expansion, rng, dtype=np.float32):
        super().__init__()
        self.attn_norm = LayerNorm(d, dtype)
        self.attn = MultiHeadSelfAttention(d, num_heads, rng, dtype)
        self.ffn_norm = LayerNorm(d, dtype)
        self.ffn = FeedForward(d, ffn_expansion * d, rng, dtype)

    def forward(self, x):
        if x.ndim != 3:
            raise ShapeError("encoder block input", "(N, length, d)", x.shape)
        x = x + self.attn(self.attn_norm(x))
        return x + self.ffn(self.ffn_norm(x))


def encoder_block(block, tokens):
    """Apply ``block`` to a TokenSequence, preserving its shape and provenance."""
    return TokenSequence(tokens=block(tokens.tokens), d=tokens.d, length=tokens.length,
                         provenance=tokens.provenance)
