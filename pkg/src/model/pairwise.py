"""
The pairwise relation network: backbone(s) for the two inputs followed by a
relation head.

The model is split into ``features`` and ``relate`` so callers can cache the
backbone output of each image and only rerun the head for every pair.

With an ``["age"]`` head the same network regresses the age of one image:
the baseline trained without relation learning.
"""

import logging

import numpy as np

from numerics.errors import ConfigError, ShapeError
from numerics.modules import Module

from .backbone import SFCN
from .heads import FCRelationHead, TransformerRelationHead
from .tokens import sequence_length

logger = logging.getLogger(__name__)

DEFAULT_INPUT_EXTENTS = (32, 32)
DEFAULT_MAX_AGE = 100.0


class PairwiseRelationModel(Module):
    def __init__(self, backbone, head, rng, input_extents=DEFAULT_INPUT_EXTENTS, max_age=DEFAULT_MAX_AGE,
                 dtype=np.float32):
        """
        Args:
            backbone (BackboneConfig): Backbone configuration
            head (HeadConfig): Head configuration
            rng (np.random.Generator): Initialization randomness
            input_extents (tuple): Spatial extents of the images
            max_age (float): Maximum age A
            dtype: Parameter dtype
        """
        super().__init__()
        backbone.validate()
        head.validate()
        if len(input_extents) != backbone.spatial_dims:
            raise ConfigError(
                f"input extents {tuple(input_extents)} do not match spatial_dims={backbone.spatial_dims}"
            )
        self.backbone_config = backbone
        self.head_config = head
        self.input_extents = tuple(int(e) for e in input_extents)
        self.max_age = float(max_age)

        self.backbone_x = SFCN(backbone, rng, dtype)
        # single-image regressors only read backbone_x
        shared = backbone.sharing == "shared" or head.direct
        self.backbone_y = self.backbone_x if shared else SFCN(backbone, rng, dtype)
        self.feature_shape = tuple(self.backbone_x.output_shape(self.input_shape(1))[1:])

        head_class = TransformerRelationHead if head.variant == "Transformer" else FCRelationHead
        self.head = head_class(head, self.feature_shape, max_age, rng, dtype)

    @property
    def relation_subset(self):
        return list(self.head_config.relation_subset)

    @property
    def direct(self):
        return self.head_config.direct

    def input_shape(self, batch):
        return (batch, self.backbone_config.in_channels) + self.input_extents

    def features(self, images, slot="x"):
        """Backbone features of ``images`` for input slot "x" or "y"."""
        if tuple(images.shape[1:]) != self.input_shape(1)[1:]:
            raise ShapeError("model input", self.input_shape(images.shape[0])[1:], tuple(images.shape[1:]))
        backbone = self.backbone_x if slot == "x" else self.backbone_y
        return backbone(images)

    def relate(self, features_x, features_y=None):
        """``(N, K)`` relations in years from cached features (``(N, 1)`` ages when direct)."""
        return self.head(features_x, None if self.direct else features_y)

    def forward(self, images_x, images_y=None):
        if self.direct:
            return self.relate(self.features(images_x, "x"))
        return self.relate(self.features(images_x, "x"), self.features(images_y, "y"))

    def summary(self):
        """
        Structured description of the architecture: backbone layer shapes,
        token geometry and parameter counts.
        """
        layer_rows = [
            {"layer": name, "output_shape": list(shape[1:])}
            for name, shape in self.backbone_x.layer_shapes(self.input_shape(1))
        ]
        backbone_params = self.backbone_x.num_parameters()
        if self.backbone_y is not self.backbone_x:
            backbone_params += self.backbone_y.num_parameters()
        length = sequence_length(self.feature_shape)
        return {
            "backbone": {
                "variant": self.backbone_config.variant,
                "sharing": self.backbone_config.sharing,
                "input_shape": list(self.input_shape(1)[1:]),
                "layers": layer_rows,
                "parameters": backbone_params,
            },
            "tokens": {
                "d": int(self.feature_shape[0]),
                "per_image": length,
                "pair": length if self.direct else 2 * length,
                "source": getattr(self.head, "token_source", "flatten"),
            },
            "head": {
                "variant": self.head_config.variant,
                "relations": self.relation_subset,
                "parameters": self.head.num_parameters(),
            },
            "parameters": self.num_parameters(),
        }


def build_model(backbone, head, seed, input_extents=DEFAULT_INPUT_EXTENTS, max_age=DEFAULT_MAX_AGE,
                dtype=np.float32):
    """
    Build a PairwiseRelationModel with weights drawn from ``seed``.

    Args:
        backbone (BackboneConfig): Backbone configuration
        head (HeadConfig): Head configuration
        seed (int or list): Seed or seed sequence entropy
        input_extents (tuple): Spatial image extents
        max_age (float): Maximum age A
        dtype: Parameter dtype

    Returns:
        PairwiseRelationModel: Freshly initialized model in training mode
    """
    model = PairwiseRelationModel(backbone, head, np.random.default_rng(seed), input_extents, max_age, dtype)
    logger.debug("Built %s/%s model with %d parameters", backbone.variant, head.variant, model.num_parameters())
    return model
