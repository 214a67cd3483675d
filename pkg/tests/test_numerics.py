import numpy as np
import pytest

from model.configs import HeadConfig
from model.heads import TransformerRelationHead
from numerics import layers
from numerics.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from numerics.errors import ConfigError, NumericalError, ShapeError
from numerics.gradcheck import check_gradients, random_projection
from numerics.modules import BatchNorm, Linear, Parameter
from numerics.optim import Adam, scheduled_lr
from numerics.tensor import Tensor, no_grad

SEEDS = range(20)
TOLERANCE = 1e-4


def _gradient_error(op, arrays, seed):
    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    # reseeded per call so every evaluation projects onto the same weights
    return check_gradients(lambda: random_projection(op(*tensors), np.random.default_rng([seed, 99])), tensors)


def _spaced(rng, shape):
    """Distinct values at least 0.1 apart, so max-pool winners are stable under perturbation."""
    return rng.permutation(int(np.prod(shape))).reshape(shape) * 0.1


@pytest.mark.parametrize("seed", SEEDS)
def test_conv2d_gradients(seed):
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=(2, 2, 5, 5)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)]
    assert _gradient_error(lambda x, w, b: layers.conv(x, w, b), arrays, seed) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_conv3d_gradients(seed):
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=(1, 2, 4, 4, 3)), rng.normal(size=(2, 2, 3, 3, 3)), rng.normal(size=2)]
    assert _gradient_error(lambda x, w, b: layers.conv(x, w, b), arrays, seed) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_max_pool_gradients(seed):
    rng = np.random.default_rng(seed)
    assert _gradient_error(layers.max_pool, [_spaced(rng, (2, 2, 5, 4))], seed) < TOLERANCE
    assert _gradient_error(layers.max_pool, [_spaced(rng, (1, 2, 4, 5, 4))], seed) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_batch_norm_gradients(seed):
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=(4, 3, 3, 3)), rng.normal(size=3), rng.normal(size=3)]
    op = lambda x, g, b: layers.batch_norm(x, g, b, training=True)  # noqa: E731
    assert _gradient_error(op, arrays, seed) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_relu_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 7))
    x = np.where(np.abs(x) < 0.01, 0.5, x)
    assert _gradient_error(layers.relu, [x], seed) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_linear_gradients(seed):
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=(2, 4, 5)), rng.normal(size=(5, 3)), rng.normal(size=3)]
    assert _gradient_error(layers.linear, arrays, seed) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_gradients(seed):
    rng = np.random.default_rng(seed)
    assert _gradient_error(layers.softmax, [rng.normal(size=(3, 5))], seed) < TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_layer_norm_gradients(seed):
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=(3, 4, 6)), rng.normal(size=6), rng.normal(size=6)]
    assert _gradient_error(layers.layer_norm, arrays, seed) < TOLERANCE


@pytest.mark.parametrize("seed", range(5))
def test_transformer_head_gradients(seed):
    rng = np.random.default_rng(seed)
    config = HeadConfig(num_blocks=1, num_heads=2)
    head = TransformerRelationHead(config, (4, 2, 1), max_age=1.0, rng=rng, dtype=np.float64)
    for _, param in head.named_parameters():
        # Leave no zero-initialized projection, so every path carries gradient
        param.data = param.data + rng.normal(scale=0.1, size=param.shape)
    fx = Tensor(rng.normal(size=(2, 4, 2, 1)), requires_grad=True)
    fy = Tensor(rng.normal(size=(2, 4, 2, 1)), requires_grad=True)
    weights = Tensor(rng.normal(size=(2, 4)))
    tensors = [fx, fy] + head.parameters()
    assert check_gradients(lambda: (head(fx, fy) * weights).sum(), tensors) < TOLERANCE


def test_identity_pointwise_conv():
    x = np.random.default_rng(0).normal(size=(2, 3, 4, 5))
    weight = np.eye(3).reshape(3, 3, 1, 1)
    out = layers.conv(Tensor(x), Tensor(weight), Tensor(np.zeros(3)), padding=0)
    np.testing.assert_array_equal(out.data, x)


def test_pool_shape_rule():
    assert layers.pool_output_shape((1, 2, 80, 130, 170)) == (1, 2, 40, 65, 85)
    with pytest.raises(ShapeError, match="larger image"):
        layers.pool_output_shape((1, 2, 1, 4))


def test_softmax_of_equal_scores():
    out = layers.softmax(Tensor(np.zeros(3)))
    np.testing.assert_allclose(out.data, np.full(3, 1 / 3))


def test_layer_forward_dispatch():
    x = Tensor(np.array([[-1.0, 2.0]]))
    np.testing.assert_array_equal(layers.layer_forward("relu", x).data, [[0.0, 2.0]])
    with pytest.raises(ValueError):
        layers.layer_forward("dropout", x)


def test_conv_shape_mismatch_names_extents():
    x = Tensor(np.zeros((1, 2, 5, 5)))
    with pytest.raises(ShapeError) as info:
        layers.conv(x, Tensor(np.zeros((3, 4, 3, 3))), Tensor(np.zeros(3)))
    assert info.value.actual == (3, 4, 3, 3)


def test_batch_norm_rejects_single_sample_in_training():
    with pytest.raises(ShapeError, match="batch size"):
        layers.batch_norm(Tensor(np.ones((1, 2, 3, 3))), Tensor(np.ones(2)), Tensor(np.zeros(2)))


def test_backward_of_sum_is_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_of_half_square_norm_is_identity():
    x = Tensor(np.array([1.5, -2.0, 0.25]), requires_grad=True)
    ((x * x).sum() * 0.5).backward()
    np.testing.assert_allclose(x.grad, x.data)


def test_backward_accumulates_without_reset():
    x = Tensor(np.ones(3), requires_grad=True)
    x.sum().backward()
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.full(3, 2.0))


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad
    assert y.creator is None


def test_lr_schedule_halves_every_period():
    assert scheduled_lr(1e-4, 34, 35) == pytest.approx(1e-4)
    assert scheduled_lr(1e-4, 35, 35) == pytest.approx(5e-5)
    assert scheduled_lr(1e-4, 79, 35) == pytest.approx(2.5e-5)
    with pytest.raises(ConfigError):
        scheduled_lr(1e-4, 0, 0)


def test_adam_single_step_matches_formula():
    p = Parameter(np.array(1.0), dtype=np.float64)
    p.grad = np.array(0.5)
    Adam({"p": p}, base_lr=0.1).step(epoch=0)
    assert p.data == pytest.approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8), abs=1e-15)
    assert p.data == pytest.approx(0.900000002, abs=1e-12)


def test_adam_zero_gradients_keep_parameters():
    p = Parameter(np.array([1.0, -2.0]), dtype=np.float64)
    optimizer = Adam({"p": p}, base_lr=0.1)
    for epoch in range(5):
        p.grad = np.zeros(2)
        optimizer.step(epoch)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_names_missing_gradient():
    optimizer = Adam({"encoder.weight": Parameter(np.ones(2))})
    with pytest.raises(NumericalError, match="encoder.weight"):
        optimizer.step(0)


def test_same_seed_same_initialization():
    a = Linear(4, 3, np.random.default_rng(7))
    b = Linear(4, 3, np.random.default_rng(7))
    np.testing.assert_array_equal(a.weight.data, b.weight.data)
    np.testing.assert_array_equal(a.bias.data, b.bias.data)


def test_batch_norm_running_statistics_in_state():
    norm = BatchNorm(2)
    norm(Tensor(np.random.default_rng(0).normal(size=(4, 2, 3, 3)), dtype=np.float32))
    state = norm.state_dict()
    assert set(state) == {"gamma", "beta", "running_mean", "running_var"}
    assert not np.allclose(state["running_mean"], 0.0)
    with pytest.raises(ConfigError, match="missing"):
        norm.load_state_dict({"gamma": state["gamma"]})


def test_checkpoint_round_trip(tmp_path):
    layer = Linear(3, 2, np.random.default_rng(0))
    optimizer = Adam(layer.named_parameters(), base_lr=1e-3, half_period=15)
    (layer(Tensor(np.ones((2, 3)), dtype=np.float32)).sum()).backward()
    optimizer.step(0)
    path = tmp_path / "model.npz"
    save_checkpoint(path, Checkpoint("abc", 3, layer.state_dict(), optimizer.state_dict(), {"note": [1, 2]}))

    loaded = load_checkpoint(path)
    assert (loaded.config_hash, loaded.epoch, loaded.extra) == ("abc", 3, {"note": [1, 2]})
    np.testing.assert_array_equal(loaded.model_state["weight"], layer.weight.data)
    assert loaded.model_state["weight"].dtype == np.dtype("<f4")
    restored = Adam(Linear(3, 2, np.random.default_rng(1)).named_parameters())
    restored.load_state_dict(loaded.optimizer_state)
    assert restored.state.step_count == 1
    assert restored.half_period == 15
    np.testing.assert_array_equal(restored.state.first_moment["weight"], optimizer.state.first_moment["weight"])
