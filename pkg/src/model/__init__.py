"""
Pairwise relation network: SFCN backbones, token fusion and relation heads.
"""

from .backbone import SFCN, extract_features
from .configs import RELATION_ORDER, BackboneConfig, HeadConfig
from .heads import FCRelationHead, TransformerRelationHead, fc_head, relation_heads
from .pairwise import PairwiseRelationModel, build_model
from .tokens import TokenSequence, sequence_length, to_tokens, tokenize_pair
from .transformer import EncoderBlock, MultiHeadSelfAttention, attention, encoder_block

__all__ = [
    "RELATION_ORDER",
    "SFCN",
    "BackboneConfig",
    "EncoderBlock",
    "FCRelationHead",
    "HeadConfig",
    "MultiHeadSelfAttention",
    "PairwiseRelationModel",
    "TokenSequence",
    "TransformerRelationHead",
    "attention",
    "build_model",
    "encoder_block",
    "extract_features",
    "fc_head",
    "relation_heads",
    "sequence_length",
    "to_tokens",
    "tokenize_pair",
]
