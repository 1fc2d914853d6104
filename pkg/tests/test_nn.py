import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _fd import max_rel_error, numeric_grad
from infogap.errors import ConfigurationError, NumericError
from infogap.nn import (
    ACTIVATIONS,
    DenseLayer,
    TrainConfig,
    activation_derivative,
    backward,
    forward,
    init_stack,
    rebuild_stack,
    sgd_step,
    softmax,
    stack_grads,
    stack_params,
)


def test_identity_layer_passes_input_through():
    layer = DenseLayer(np.eye(2), np.zeros(2), "identity")
    np.testing.assert_array_equal(forward([layer], np.array([1.0, 2.0])), [1.0, 2.0])


def test_relu_clamps_negatives():
    layer = DenseLayer(np.eye(2), np.zeros(2), "relu")
    np.testing.assert_array_equal(forward([layer], np.array([-1.0, 2.0])), [0.0, 2.0])


def _manual_forward(layers, x):
    # explicit loops, no numpy matmul
    h = list(x)
    for layer in layers:
        z = [sum(layer.weights[o, i] * h[i] for i in range(len(h))) + layer.biases[o] for o in range(layer.n_out)]
        if layer.activation == "relu":
            h = [max(v, 0.0) for v in z]
        elif layer.activation == "sigmoid":
            h = [1 / (1 + np.exp(-v)) for v in z]
        elif layer.activation == "softplus":
            h = [np.log1p(np.exp(v)) for v in z]
        else:
            h = z
    return np.array(h)


def test_two_layer_net_matches_loop_implementation():
    rng = np.random.default_rng(42)
    layers = init_stack([5, 4, 3], ["relu", "sigmoid"], rng)
    x = rng.normal(size=5)
    np.testing.assert_allclose(forward(layers, x), _manual_forward(layers, x), rtol=0, atol=1e-12)


def test_batch_and_vector_forward_agree():
    rng = np.random.default_rng(1)
    layers = init_stack([3, 4, 2], ["softplus", "identity"], rng)
    x = rng.normal(size=(6, 3))
    batch = forward(layers, x)
    for i in range(6):
        np.testing.assert_allclose(forward(layers, x[i]), batch[i], rtol=1e-13, atol=1e-15)


def test_dimension_mismatch_is_configuration_error():
    layer = DenseLayer(np.eye(2), np.zeros(2))
    with pytest.raises(ConfigurationError):
        forward([layer], np.ones(3))


def test_layer_rejects_bad_shapes_and_nonfinite():
    with pytest.raises(ConfigurationError):
        DenseLayer(np.eye(2), np.zeros(3))
    with pytest.raises(ConfigurationError):
        DenseLayer(np.eye(2), np.zeros(2), "tanh")
    with pytest.raises(NumericError):
        DenseLayer(np.array([[np.nan]]), np.zeros(1))


def test_linear_layer_weight_gradient():
    layer = DenseLayer(np.array([[0.3, -0.2]]), np.zeros(1))
    g = backward([layer], np.array([1.0, 0.0]), np.array([1.0]))
    np.testing.assert_array_equal(g.weights[0], [[1.0, 0.0]])
    np.testing.assert_array_equal(g.biases[0], [1.0])


def test_softplus_derivative_at_zero_is_half():
    assert activation_derivative("softplus", np.array([0.0]))[0] == 0.5


def test_nonfinite_gradient_raises():
    layer = DenseLayer(np.eye(1), np.zeros(1))
    with pytest.raises(NumericError):
        backward([layer], np.array([1.0]), np.array([np.inf]))


def _stack_loss(layers, x, target):
    def fn(flat):
        out = forward(rebuild_stack(layers, flat), x)
        return float(np.sum((out - target) ** 2))

    return fn


@pytest.mark.parametrize("seed", range(20))
def test_three_layer_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    acts = [ACTIVATIONS[(seed + i) % 4] for i in range(3)]
    layers = init_stack([4, 5, 3, 2], acts, rng)
    x = rng.normal(size=(3, 4))
    target = rng.normal(size=(3, 2))
    out = forward(layers, x)
    g = backward(layers, x, 2 * (out - target))
    num = numeric_grad(_stack_loss(layers, x, target), stack_params(layers))
    assert max_rel_error(stack_grads(g), num) < 1e-4


@pytest.mark.parametrize("act", ACTIVATIONS)
def test_input_gradient_matches_finite_differences(act):
    rng = np.random.default_rng(7)
    layers = init_stack([3, 4], [act], rng)
    x = rng.normal(size=3) + 0.05  # keep relu away from its kink
    g = backward(layers, x, np.ones(4))
    num = numeric_grad(lambda p: float(forward(layers, p[0]).sum()), [x])
    assert max_rel_error([g.inputs], num) < 1e-4


def test_sgd_plain_step():
    p, _ = sgd_step([np.zeros(1)], [np.ones(1)], TrainConfig(learning_rate=1.0))
    assert p[0][0] == -1.0


def test_sgd_zero_gradient_is_fixed_point():
    params = [np.array([0.5, -2.0])]
    p, v = sgd_step(params, [np.zeros(2)], TrainConfig(learning_rate=0.3, momentum=0.9))
    np.testing.assert_array_equal(p[0], params[0])
    np.testing.assert_array_equal(v[0], 0.0)


def test_sgd_momentum_recursion():
    cfg = TrainConfig(learning_rate=0.1, momentum=0.5)
    p, v = sgd_step([np.zeros(1)], [np.ones(1)], cfg)
    assert p[0][0] == pytest.approx(-0.1, abs=1e-15)
    p, v = sgd_step(p, [np.ones(1)], cfg, v)
    assert p[0][0] == pytest.approx(-0.25, abs=1e-15)


def test_momentum_schedule_switches_after_five_epochs():
    cfg = TrainConfig(momentum=0.5, final_momentum=0.9)
    assert [cfg.momentum_at(e) for e in (0, 4, 5, 10)] == [0.5, 0.5, 0.9, 0.9]


@pytest.mark.parametrize("kw", [dict(learning_rate=0.0), dict(batch_size=0), dict(lam=-1.0), dict(momentum=1.0)])
def test_train_config_validation(kw):
    with pytest.raises(ConfigurationError):
        TrainConfig(**kw)


def test_init_is_seeded_and_bounded():
    a = init_stack([9, 4], ["relu"], np.random.default_rng(3))
    b = init_stack([9, 4], ["relu"], np.random.default_rng(3))
    np.testing.assert_array_equal(a[0].weights, b[0].weights)
    assert np.abs(a[0].weights).max() <= 1 / 3


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-700, 700), min_size=1, max_size=12))
def test_softmax_normalized_and_positive(logits):
    p = softmax(np.array(logits))
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p >= 0)
    # strictly positive whenever the logit spread is representable
    if max(logits) - min(logits) < 700:
        assert np.all(p > 0)
