"""
Turn backbone feature tensors into token sequences.

A feature tensor of shape ``(N, d, *spatial)`` becomes ``L = prod(spatial)``
tokens of width ``d``, flattened row-major over the spatial axes in stored
order. Internally tokens are rows: ``(N, L, d)``.
"""

from dataclasses import dataclass

import numpy as np

from numerics.errors import ShapeError
from numerics.tensor import Tensor


@dataclass
class TokenSequence:
    tokens: Tensor
    d: int
    length: int
    provenance: str

    def __post_init__(self):
        if self.tokens.shape[1:] != (self.length, self.d):
            raise ShapeError("token sequence", (self.length, self.d), self.tokens.shape[1:])


def sequence_length(feature_shape):
    """L for a feature shape ``(d, *spatial)`` (no batch axis)."""
    return int(np.prod(feature_shape[1:]))


def to_tokens(features, provenance):
    """
    Args:
        features (Tensor): ``(N, d, *spatial)``
        provenance (str): "x" or "y"

    Returns:
        TokenSequence: ``(N, L, d)`` tokens
    """
    n, d = features.shape[:2]
    length = sequence_length(features.shape[1:])
    tokens = features.reshape(n, d, length).transpose(0, 2, 1)
    return TokenSequence(tokens=tokens, d=d, length=length, provenance=provenance)


def tokenize_pair(features_x, features_y):
    """
    Concatenate the token sequences of both inputs: x first, then y.

    Raises:
        ShapeError: If the two feature tensors differ in shape
    """
    if features_x.shape != features_y.shape:
        raise ShapeError("tokenize_pair", features_x.shape, features_y.shape)
    tx = to_tokens(features_x, "x")
    ty = to_tokens(features_y, "y")
    tokens = Tensor.concat([tx.tokens, ty.tokens], axis=1)
    return TokenSequence(tokens=tokens, d=tx.d, length=2 * tx.length, provenance="xy")
