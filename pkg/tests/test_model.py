import math

import numpy as np
import pytest

from experiments.losses import relation_loss
from model.backbone import SFCN, extract_features
from model.configs import BackboneConfig, HeadConfig
from model.heads import FCRelationHead, TransformerRelationHead, relation_heads, resolve_token_source
from model.pairwise import build_model
from model.tokens import sequence_length, tokenize_pair
from model.transformer import EncoderBlock, MultiHeadSelfAttention, attention, encoder_block
from numerics.errors import ConfigError, ShapeError
from numerics.tensor import Tensor, no_grad

SMALL_PLAN = [4, 4, 8, 8, 8, 8]


def small_head(**kwargs):
    return HeadConfig(num_heads=2, num_blocks=1, **kwargs)


def test_3d_backbone_reproduces_reference_geometry():
    backbone = SFCN(BackboneConfig(spatial_dims=3), np.random.default_rng(0))
    assert backbone.output_shape((2, 2, 80, 130, 170)) == (2, 64, 2, 4, 5)
    assert sequence_length((64, 2, 4, 5)) == 40


def test_3d_model_token_geometry():
    model = build_model(BackboneConfig(spatial_dims=3), HeadConfig(), seed=0, input_extents=(80, 130, 170))
    tokens = model.summary()["tokens"]
    assert (tokens["d"], tokens["per_image"], tokens["pair"]) == (64, 40, 80)
    assert tokens["source"] == "sequence"


def test_desk_geometry_collapses_to_one_position():
    model = build_model(BackboneConfig(), HeadConfig(), seed=0)
    assert model.feature_shape == (64, 1, 1)
    summary = model.summary()
    assert summary["tokens"]["source"] == "relation_tokens"
    assert summary["backbone"]["layers"][-1]["output_shape"] == [64, 1, 1]


def test_shared_backbone_has_half_the_parameters():
    shared = build_model(BackboneConfig(sharing="shared", channel_plan=SMALL_PLAN), small_head(), seed=3)
    independent = build_model(BackboneConfig(sharing="independent", channel_plan=SMALL_PLAN), small_head(), seed=3)
    assert 2 * shared.summary()["backbone"]["parameters"] == independent.summary()["backbone"]["parameters"]
    assert shared.backbone_x is shared.backbone_y
    assert independent.backbone_x is not independent.backbone_y


def test_msfcn_needs_larger_input():
    with pytest.raises(ShapeError, match="at least 64"):
        build_model(BackboneConfig(variant="mSFCN", channel_plan=SMALL_PLAN), small_head(), seed=0)
    model = build_model(BackboneConfig(variant="mSFCN", channel_plan=SMALL_PLAN), small_head(), seed=0,
                        input_extents=(64, 64))
    assert model.feature_shape == (8, 1, 1)


def test_channel_plan_length_is_validated():
    with pytest.raises(ConfigError, match="exactly 6"):
        BackboneConfig(channel_plan=[8, 8]).validate()


def test_extract_features_shape(rng):
    model = build_model(BackboneConfig(channel_plan=SMALL_PLAN), small_head(), seed=0)
    with no_grad():
        features = extract_features(model.eval(), Tensor(rng.normal(size=(3, 2, 32, 32)), dtype=np.float32))
    assert features.shape == (3, 8, 1, 1)


def test_model_rejects_wrong_image_shape(rng):
    model = build_model(BackboneConfig(channel_plan=SMALL_PLAN), small_head(), seed=0)
    with pytest.raises(ShapeError):
        model.features(Tensor(rng.normal(size=(2, 2, 16, 16))))
    with pytest.raises(ConfigError):
        build_model(BackboneConfig(channel_plan=SMALL_PLAN), small_head(), seed=0, input_extents=(32, 32, 32))


def test_identical_inputs_give_mirrored_tokens(rng):
    features = Tensor(rng.normal(size=(2, 3, 4, 5, 2)))
    pair = tokenize_pair(features, features)
    assert pair.length == 80
    np.testing.assert_array_equal(pair.tokens.data[:, :40], pair.tokens.data[:, 40:])
    # row-major over the spatial axes
    np.testing.assert_array_equal(pair.tokens.data[:, 1], features.data[:, :, 0, 0, 1])


def test_tokenize_pair_rejects_mismatched_shapes(rng):
    with pytest.raises(ShapeError):
        tokenize_pair(Tensor(rng.normal(size=(1, 3, 2, 2))), Tensor(rng.normal(size=(1, 3, 2, 1))))


def test_attention_single_token_returns_value(rng):
    v = rng.normal(size=(1, 4))
    out, weights = attention(Tensor(rng.normal(size=(1, 4))), Tensor(rng.normal(size=(1, 4))), Tensor(v))
    np.testing.assert_allclose(out.data, v)
    np.testing.assert_allclose(weights.data, [[1.0]])


def test_attention_equal_scores_average_values(rng):
    v = rng.normal(size=(5, 3))
    out, _ = attention(Tensor(np.zeros((2, 3))), Tensor(rng.normal(size=(5, 3))), Tensor(v))
    np.testing.assert_allclose(out.data, np.tile(v.mean(axis=0), (2, 1)))


def test_attention_two_token_example():
    q = np.array([[1.0, 0.0], [0.0, 2.0]])
    k = np.array([[1.0, 1.0], [0.0, 1.0]])
    v = np.array([[1.0, 2.0], [3.0, 4.0]])
    out, weights = attention(Tensor(q), Tensor(k), Tensor(v))
    scale = 1.0 / math.sqrt(2.0)
    # scores q.k: row 0 -> (1, 0), row 1 -> (2, 2)
    w0 = math.exp(scale) / (math.exp(scale) + 1.0)
    expected_weights = [[w0, 1.0 - w0], [0.5, 0.5]]
    np.testing.assert_allclose(weights.data, expected_weights)
    np.testing.assert_allclose(out.data, np.array(expected_weights) @ v)


def test_attention_heads_must_divide_width(rng):
    with pytest.raises(ConfigError, match="divisible"):
        MultiHeadSelfAttention(6, 4, rng)


def test_fresh_encoder_block_adds_only_attention(rng):
    block = EncoderBlock(8, 2, 4, rng, dtype=np.float64)
    tokens = tokenize_pair(Tensor(rng.normal(size=(2, 8, 2, 1))), Tensor(rng.normal(size=(2, 8, 2, 1))))
    out = encoder_block(block, tokens)
    assert out.provenance == "xy"
    x = tokens.tokens
    attended = x + block.attn(block.attn_norm(x))
    np.testing.assert_allclose(out.tokens.data, attended.data)
    assert not np.allclose(out.tokens.data, x.data)


def test_zero_weight_relation_heads_return_bias(rng):
    bias = np.array([100.0, 0.0, 50.0, 50.0])
    out = relation_heads(Tensor(rng.normal(size=(3, 6, 4))), Tensor(np.zeros((4, 4))), Tensor(bias), scale=100.0)
    np.testing.assert_allclose(out.data, np.tile(bias, (3, 1)))
    with pytest.raises(ShapeError):
        relation_heads(Tensor(rng.normal(size=(3, 2, 4))), Tensor(np.zeros((4, 4))), Tensor(bias))


def test_token_source_resolution():
    assert resolve_token_source("auto", 80, 4) == "sequence"
    assert resolve_token_source("auto", 2, 4) == "relation_tokens"
    assert resolve_token_source("relation_tokens", 80, 4) == "relation_tokens"
    with pytest.raises(ConfigError):
        resolve_token_source("sequence", 2, 4)


@pytest.mark.parametrize("subset", [["r1", "r2", "r3", "r4"], ["r1", "r2"], ["r3"]])
def test_transformer_head_emits_one_value_per_relation(rng, subset):
    head = TransformerRelationHead(small_head(relation_subset=subset), (8, 1, 1), 100.0, rng)
    fx = Tensor(rng.normal(size=(5, 8, 1, 1)), dtype=np.float32)
    assert head(fx, fx).shape == (5, len(subset))


def test_transformer_head_starts_at_relation_midpoints(rng):
    head = TransformerRelationHead(small_head(), (8, 2, 2), 100.0, rng, dtype=np.float64)
    head.head_weight.data[:] = 0.0
    out = head(Tensor(rng.normal(size=(2, 8, 2, 2))), Tensor(rng.normal(size=(2, 8, 2, 2))))
    np.testing.assert_allclose(out.data, [[100.0, 0.0, 50.0, 50.0]] * 2)


def test_fc_head_width_and_zero_input(rng):
    head = FCRelationHead(HeadConfig(variant="FCs"), (8, 1, 1), 100.0, rng, dtype=np.float64)
    zeros = Tensor(np.zeros((2, 8, 1, 1)))
    out = head(zeros, zeros).data
    assert out.shape == (2, 4)
    hidden = np.maximum(head.hidden1.bias.data, 0.0)
    hidden = np.maximum(hidden @ head.hidden2.weight.data + head.hidden2.bias.data, 0.0)
    expected = hidden @ head.out_weight.data * 100.0 + head.out_bias.data
    np.testing.assert_allclose(out, np.tile(expected, (2, 1)))


def test_identical_pair_gives_identical_outputs(rng):
    model = build_model(BackboneConfig(channel_plan=SMALL_PLAN), HeadConfig(variant="FCs"), seed=4).eval()
    images = Tensor(rng.normal(size=(2, 2, 32, 32)), dtype=np.float32)
    with no_grad():
        np.testing.assert_array_equal(model(images, images).data, model(images, images).data)


def _one_batch_gradients(model, rng):
    images_x = Tensor(rng.normal(size=(4, 2) + model.input_extents), dtype=np.float32)
    images_y = Tensor(rng.normal(size=(4, 2) + model.input_extents), dtype=np.float32)
    model.zero_grad()
    relation_loss(model(images_x, images_y), rng.uniform(0, 100, size=(4, 4))).backward()


def _backbone_gradients_reach_every_layer(model):
    for name, param in model.backbone_x.named_parameters():
        assert param.grad is not None, name
        assert np.any(param.grad != 0), name


def test_loss_gradient_reaches_every_backbone_parameter(rng):
    model = build_model(BackboneConfig(channel_plan=SMALL_PLAN), small_head(), seed=1, input_extents=(64, 64))
    assert model.head.token_source == "sequence"
    _one_batch_gradients(model, rng)
    _backbone_gradients_reach_every_layer(model)


def test_backbone_convs_carry_no_bias():
    backbone = SFCN(BackboneConfig(channel_plan=SMALL_PLAN), np.random.default_rng(0))
    assert not any(name.endswith("layers.0.bias") for name, _ in backbone.named_parameters())


@pytest.mark.parametrize("seed", range(3))
def test_relation_token_model_couples_to_images_on_first_batch(seed):
    rng = np.random.default_rng(seed)
    model = build_model(BackboneConfig(channel_plan=SMALL_PLAN), small_head(), seed=seed)
    assert model.head.token_source == "relation_tokens"
    _one_batch_gradients(model, rng)
    _backbone_gradients_reach_every_layer(model)


def test_fresh_model_outputs_depend_on_images(rng):
    model = build_model(BackboneConfig(channel_plan=SMALL_PLAN), small_head(), seed=2)
    images_y = Tensor(rng.normal(size=(4, 2, 32, 32)), dtype=np.float32)
    first = model(Tensor(rng.normal(size=(4, 2, 32, 32)), dtype=np.float32), images_y).data
    second = model(Tensor(rng.normal(size=(4, 2, 32, 32)), dtype=np.float32), images_y).data
    assert not np.allclose(first, second)


@pytest.mark.parametrize("variant", ["Transformer", "FCs"])
def test_direct_age_head_reads_one_image(rng, variant):
    head_config = HeadConfig(variant=variant, num_heads=2, num_blocks=1, relation_subset=["age"])
    model = build_model(BackboneConfig(sharing="independent", channel_plan=SMALL_PLAN), head_config, seed=5)
    assert model.direct
    assert model.backbone_x is model.backbone_y
    images = Tensor(rng.normal(size=(3, 2, 32, 32)), dtype=np.float32)
    assert model(images).shape == (3, 1)
    tokens = model.summary()["tokens"]
    assert tokens["pair"] == tokens["per_image"]


def test_direct_transformer_head_starts_at_half_max_age(rng):
    head = TransformerRelationHead(small_head(relation_subset=["age"]), (8, 2, 2), 100.0, rng, dtype=np.float64)
    head.head_weight.data[:] = 0.0
    np.testing.assert_allclose(head(Tensor(rng.normal(size=(2, 8, 2, 2)))).data, [[50.0], [50.0]])
