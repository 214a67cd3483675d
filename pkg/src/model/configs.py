"""
Architecture configuration for the pairwise relation network.
"""

from dataclasses import dataclass, field

from numerics.errors import ConfigError

DEFAULT_CHANNEL_PLAN = (32, 64, 128, 256, 256, 64)
NUM_BLOCKS = 6
BACKBONE_VARIANTS = ("SFCN", "mSFCN")
SHARING_MODES = ("shared", "independent")
HEAD_VARIANTS = ("FCs", "Transformer")
TOKEN_SOURCES = ("auto", "sequence", "relation_tokens")
RELATION_ORDER = ("r1", "r2", "r3", "r4")
# Output of a single-image regressor trained without relation learning
AGE_TARGET = "age"


@dataclass
class BackboneConfig:
    """
    Attributes:
        variant (str): "SFCN" or "mSFCN" (one extra max pool on the input)
        sharing (str): "shared" weights for both inputs or "independent"
        spatial_dims (int): 2 or 3
        in_channels (int): Image channels
        channel_plan (list): Output channels of the six blocks
    """

    variant: str = "SFCN"
    sharing: str = "shared"
    spatial_dims: int = 2
    in_channels: int = 2
    channel_plan: list = field(default_factory=lambda: list(DEFAULT_CHANNEL_PLAN))

    def validate(self):
        if self.variant not in BACKBONE_VARIANTS:
            raise ConfigError(f"backbone.variant must be one of {BACKBONE_VARIANTS}, got {self.variant!r}")
        if self.sharing not in SHARING_MODES:
            raise ConfigError(f"backbone.sharing must be one of {SHARING_MODES}, got {self.sharing!r}")
        if self.spatial_dims not in (2, 3):
            raise ConfigError(f"backbone.spatial_dims must be 2 or 3, got {self.spatial_dims}")
        if self.in_channels < 1:
            raise ConfigError(f"backbone.in_channels must be positive, got {self.in_channels}")
        if len(self.channel_plan) != NUM_BLOCKS:
            raise ConfigError(
                f"backbone.channel_plan needs exactly {NUM_BLOCKS} entries, got {len(self.channel_plan)}"
            )
        if any(int(c) < 1 for c in self.channel_plan):
            raise ConfigError(f"backbone.channel_plan entries must be positive, got {self.channel_plan}")
        return self

    @property
    def num_pools(self):
        return NUM_BLOCKS - 1 + (1 if self.variant == "mSFCN" else 0)

    @property
    def feature_dim(self):
        return int(self.channel_plan[-1])


@dataclass
class HeadConfig:
    """
    Attributes:
        variant (str): "FCs" baseline or "Transformer"
        num_blocks (int): Transformer encoder blocks
        num_heads (int): Attention heads
        relation_subset (list): Relations predicted, in output order, or
            ``["age"]`` for a single-image age regressor
        ffn_expansion (int): FFN hidden width as a multiple of the token width
        fc_width (int): Hidden width of the FCs head
        positional_embeddings (bool): Learned additive token embeddings
        token_source (str): Where relation heads read from: "sequence" tokens
            0..K-1, prepended "relation_tokens", or "auto"
    """

    variant: str = "Transformer"
    num_blocks: int = 2
    num_heads: int = 8
    relation_subset: list = field(default_factory=lambda: list(RELATION_ORDER))
    ffn_expansion: int = 4
    fc_width: int = 64
    positional_embeddings: bool = False
    token_source: str = "auto"

    def validate(self):
        if self.variant not in HEAD_VARIANTS:
            raise ConfigError(f"head.variant must be one of {HEAD_VARIANTS}, got {self.variant!r}")
        if self.num_blocks < 1 or self.num_heads < 1:
            raise ConfigError("head.num_blocks and head.num_heads must be positive")
        if self.token_source not in TOKEN_SOURCES:
            raise ConfigError(f"head.token_source must be one of {TOKEN_SOURCES}, got {self.token_source!r}")
        if self.direct:
            return self
        unknown = [r for r in self.relation_subset if r not in RELATION_ORDER]
        if unknown or len(set(self.relation_subset)) != len(self.relation_subset):
            raise ConfigError(f"head.relation_subset must draw distinct names from {RELATION_ORDER}")
        if len(self.relation_subset) not in (1, 2, 4):
            raise ConfigError(f"head.relation_subset must have 1, 2 or 4 entries, got {len(self.relation_subset)}")
        return self

    @property
    def num_relations(self):
        return len(self.relation_subset)

    @property
    def direct(self):
        """True when the head regresses the age of one image."""
        return list(self.relation_subset) == [AGE_TARGET]
