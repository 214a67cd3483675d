"""
Relation regression heads.

Both heads emit relations in years: the learned affine readout is multiplied
by ``output_scale`` (the maximum age A) and offset by a per-relation bias
initialized at the middle of that relation's range, so the network itself
works with unit-scale values.
"""

import logging

import numpy as np

from numerics import layers
from numerics.errors import ConfigError, ShapeError
from numerics.modules import LayerNorm, Linear, Module, Parameter
from numerics.tensor import Tensor
from relations.algebra import relation_midpoint

from .configs import AGE_TARGET
from .tokens import sequence_length, to_tokens, tokenize_pair
from .transformer import EncoderBlock

logger = logging.getLogger(__name__)


def resolve_token_source(token_source, sequence_len, num_relations):
    """
    Decide where the relation heads read their tokens from.

    Raises:
        ConfigError: If "sequence" is requested but fewer than K tokens exist
    """
    if token_source == "auto":
        return "sequence" if sequence_len >= num_relations else "relation_tokens"
    if token_source == "sequence" and sequence_len < num_relations:
        raise ConfigError(
            f"paired sequence has {sequence_len} tokens but {num_relations} relations need one each; "
            "use token_source 'relation_tokens' or a larger input"
        )
    return token_source


def relation_heads(tokens, weight, bias, scale=1.0):
    """
    Read relation i from token i: ``scale * <t_i, w_i> + b_i``.

    Args:
        tokens (TokenSequence or Tensor): ``(N, length, d)`` tokens
        weight (Tensor): ``(K, d)`` per-relation weights
        bias (Tensor): ``(K,)`` per-relation offsets
        scale (float): Output scale

    Returns:
        Tensor: ``(N, K)`` relations
    """
    data = getattr(tokens, "tokens", tokens)
    k = weight.shape[0]
    if data.shape[1] < k:
        raise ShapeError("relation_heads", f"at least {k} tokens", data.shape[1])
    selected = data[:, :k, :]
    return (selected * weight).sum(axis=-1) * scale + bias


def _initial_bias(subset, max_age):
    return np.array([0.5 * max_age if name == AGE_TARGET else relation_midpoint(name, max_age) for name in subset])


class TransformerRelationHead(Module):
    def __init__(self, config, feature_shape, max_age, rng, dtype=np.float32):
        """
        Args:
            config (HeadConfig): Validated head configuration
            feature_shape (tuple): Per-image feature shape ``(d, *spatial)``
            max_age (float): Maximum age A, used as output scale
            rng (np.random.Generator): Initialization randomness
        """
        super().__init__()
        d = int(feature_shape[0])
        k = config.num_relations
        self.direct = config.direct
        length = (1 if self.direct else 2) * sequence_length(feature_shape)
        self.token_source = resolve_token_source(config.token_source, length, k)
        self.num_relations = k
        self.output_scale = float(max_age)

        total = length
        self.relation_tokens = None
        if self.token_source == "relation_tokens":
            self.relation_tokens = Parameter(rng.normal(0.0, 0.02, size=(k, d)), dtype=dtype)
            total += k
        self.position = None
        if config.positional_embeddings or self.relation_tokens is not None:
            # x and y slots are indistinguishable to attention without these.
            self.position = Parameter(rng.normal(0.0, 0.02, size=(total, d)), dtype=dtype)

        self.blocks = [EncoderBlock(d, config.num_heads, config.ffn_expansion, rng, dtype)
                       for _ in range(config.num_blocks)]
        self.norm = LayerNorm(d, dtype)
        bound = 1.0 / np.sqrt(d)
        self.head_weight = Parameter(rng.uniform(-bound, bound, size=(k, d)), dtype=dtype)
        self.head_bias = Parameter(_initial_bias(config.relation_subset, max_age), dtype=dtype)

    def encode(self, features_x, features_y=None):
        """Fused token sequence ``(N, length, d)`` before the relation readout."""
        if self.direct:
            seq = to_tokens(features_x, "x").tokens
        else:
            seq = tokenize_pair(features_x, features_y).tokens
        if self.relation_tokens is not None:
            n, _, d = seq.shape
            prefix = Tensor(np.zeros((n, self.num_relations, d), dtype=seq.dtype)) + self.relation_tokens
            seq = Tensor.concat([prefix, seq], axis=1)
        if self.position is not None:
            seq = seq + self.position
        for block in self.blocks:
            seq = block(seq)
        return self.norm(seq)

    def forward(self, features_x, features_y=None):
        return relation_heads(self.encode(features_x, features_y), self.head_weight, self.head_bias,
                              self.output_scale)


class FCRelationHead(Module):
    """Baseline head: flattened pair features (or one image's features) -> 64 -> 64 -> K."""

    def __init__(self, config, feature_shape, max_age, rng, dtype=np.float32):
        super().__init__()
        self.direct = config.direct
        flat = (1 if self.direct else 2) * int(np.prod(feature_shape))
        width = config.fc_width
        self.output_scale = float(max_age)
        self.hidden1 = Linear(flat, width, rng, dtype)
        self.hidden2 = Linear(width, width, rng, dtype)
        bound = 1.0 / np.sqrt(width)
        self.out_weight = Parameter(rng.uniform(-bound, bound, size=(width, config.num_relations)), dtype=dtype)
        self.out_bias = Parameter(_initial_bias(config.relation_subset, max_age), dtype=dtype)

    def forward(self, features_x, features_y=None):
        n = features_x.shape[0]
        if self.direct:
            joined = features_x.reshape(n, -1)
        else:
            if features_x.shape != features_y.shape:
                raise ShapeError("fc_head", features_x.shape, features_y.shape)
            joined = Tensor.concat([features_x.reshape(n, -1), features_y.reshape(n, -1)], axis=1)
        hidden = layers.relu(self.hidden1(joined))
        hidden = layers.relu(self.hidden2(hidden))
        return (hidden @ self.out_weight) * self.output_scale + self.out_bias


def fc_head(head, features_x, features_y=None):
    """Apply an FCRelationHead to a feature pair."""
    return head(features_x, features_y)
