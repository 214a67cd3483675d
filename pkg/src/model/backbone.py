"""
SFCN-style fully convolutional feature extractor.

Six blocks: the first five are conv(3) -> batch norm -> ReLU -> max pool, the
last is conv(1) -> batch norm -> ReLU. The mSFCN variant max-pools the input
once more before the first block.
"""

import logging

import numpy as np

from numerics.errors import ShapeError
from numerics.modules import BatchNorm, Conv, MaxPool, Module, ReLU, Sequential

logger = logging.getLogger(__name__)


class SFCNBlock(Sequential):
    def __init__(self, in_channels, out_channels, kernel_size, spatial_dims, pool, rng, dtype):
        modules = [
            Conv(in_channels, out_channels, kernel_size, spatial_dims, rng, dtype, bias=False),
            BatchNorm(out_channels, dtype),
            ReLU(),
        ]
        if pool:
            modules.append(MaxPool())
        super().__init__(*modules)


class SFCN(Module):
    """
    Backbone mapping ``(N, C, *spatial)`` images to ``(N, d, *spatial')`` features.
    """

    def __init__(self, config, rng, dtype=np.float32):
        """
        Args:
            config (BackboneConfig): Validated backbone configuration
            rng (np.random.Generator): Initialization randomness
            dtype: Parameter dtype
        """
        super().__init__()
        self.config = config
        self.input_pool = MaxPool() if config.variant == "mSFCN" else None
        blocks = []
        in_channels = config.in_channels
        for index, out_channels in enumerate(config.channel_plan):
            last = index == len(config.channel_plan) - 1
            blocks.append(SFCNBlock(
                in_channels, int(out_channels), 1 if last else 3, config.spatial_dims,
                pool=not last, rng=rng, dtype=dtype,
            ))
            in_channels = int(out_channels)
        self.blocks = blocks

    def forward(self, x):
        if x.shape[1] != self.config.in_channels:
            raise ShapeError("image channels", self.config.in_channels, x.shape[1])
        self.output_shape(x.shape)
        if self.input_pool is not None:
            x = self.input_pool(x)
        for block in self.blocks:
            x = block(x)
        return x

    def output_shape(self, input_shape):
        try:
            if self.input_pool is not None:
                input_shape = self.input_pool.output_shape(input_shape)
            for block in self.blocks:
                input_shape = block.output_shape(input_shape)
        except ShapeError as err:
            raise ShapeError(
                "backbone features", "non-empty spatial extents", err.actual,
                hint=f"{self.config.variant} halves each axis {self.config.num_pools} times; "
                     f"use an input of at least {2 ** self.config.num_pools} per axis",
            ) from err
        return input_shape

    def layer_shapes(self, input_shape):
        """List of (layer name, output shape) for a documentation summary."""
        rows = []
        if self.input_pool is not None:
            input_shape = self.input_pool.output_shape(input_shape)
            rows.append(("input_pool", input_shape))
        for index, block in enumerate(self.blocks):
            for layer in block.layers:
                input_shape = layer.output_shape(input_shape)
                rows.append((f"blocks.{index}.{type(layer).__name__}", input_shape))
        return rows


def extract_features(model, image):
    """
    Run the backbone used for the first input slot.

    Args:
        model (PairwiseRelationModel or SFCN): Model or bare backbone
        image (Tensor): ``(N, C, *spatial)`` batch

    Returns:
        Tensor: ``(N, d, *spatial')`` feature tensor
    """
    backbone = getattr(model, "backbone_x", model)
    return backbone(image)
