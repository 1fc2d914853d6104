import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infogap.encoders import (
    ClampWarning,
    GaussianEncoder,
    LogNormalEncoder,
    RBMEncoder,
    binary_states,
    cd1_update,
    create_encoder,
    encode_gaussian,
    encode_lognormal,
    encode_rbm,
    encoder_from_dict,
    encoder_to_dict,
    kl_gaussian,
    kl_gaussian_terms,
    kl_lognormal,
    kl_lognormal_terms,
    kl_rbm,
    kl_rbm_from_activations,
    load_encoder,
    reparameterize_gaussian,
    reparameterize_lognormal,
    save_encoder,
)
from infogap.errors import BudgetError, ConfigurationError, FormatError, NumericError
from infogap.nn import DenseLayer, TrainConfig


def _const_gaussian(mu, logvar, d=3):
    """Encoder whose heads ignore x: mu and logvar come from the biases."""
    m = len(mu)
    return GaussianEncoder([], DenseLayer(np.zeros((m, d)), mu), DenseLayer(np.zeros((m, d)), logvar))


def _const_lognormal(log_f_target, alpha, prior_mu, prior_logsigma, d=2):
    """f = softplus(b) and alpha = 0.7*sigmoid(c) chosen to hit the targets exactly enough."""
    f = np.exp(log_f_target)
    b = np.log(np.expm1(f))
    s = np.asarray(alpha) / 0.7
    c = np.log(s / (1 - s))
    m = len(f)
    return LogNormalEncoder(
        [DenseLayer(np.zeros((m, d)), b, "softplus")],
        [DenseLayer(np.zeros((m, d)), c, "sigmoid")],
        np.asarray(prior_mu, dtype=float),
        np.asarray(prior_logsigma, dtype=float),
    )


# ----------------------------------------------------------------- gaussian
def test_gaussian_zero_noise_returns_mean():
    np.testing.assert_array_equal(reparameterize_gaussian([0, 0], [1, 1], [0, 0]), [0, 0])


def test_gaussian_degenerate_variance():
    np.testing.assert_array_equal(reparameterize_gaussian([1, 2], [0, 0], [3.7, -9.1]), [1, 2])


def test_gaussian_reparameterization_value():
    np.testing.assert_array_equal(reparameterize_gaussian([1, -1], [2, 3], [1, 1]), [3, 2])


def test_encode_gaussian_uses_encoder_moments():
    enc = _const_gaussian(np.array([1.0, -1.0]), np.log(np.array([4.0, 9.0])))
    np.testing.assert_allclose(encode_gaussian(enc, np.zeros(3), np.ones(2)), [3.0, 2.0], rtol=1e-15)


def test_kl_gaussian_prior_matches():
    enc = _const_gaussian(np.zeros(2), np.zeros(2))
    np.testing.assert_array_equal(kl_gaussian(enc, np.random.default_rng(0).random((5, 3))), [0.0, 0.0])


def test_kl_gaussian_unit_mean_shift():
    enc = _const_gaussian(np.ones(1), np.zeros(1))
    assert abs(kl_gaussian(enc, np.ones((4, 3)))[0] - 0.5) <= 1e-10


def test_kl_gaussian_variance_e():
    enc = _const_gaussian(np.zeros(1), np.ones(1))  # log sigma^2 = 1
    assert abs(kl_gaussian(enc, np.ones((2, 3)))[0] - (math.e - 2) / 2) <= 1e-10


def test_kl_gaussian_underflow_clamps_with_warning():
    with pytest.warns(ClampWarning):
        out = kl_gaussian_terms(np.zeros(1), np.zeros(1))
    assert np.isfinite(out).all()


# ----------------------------------------------------------------- log-normal
def test_lognormal_zero_noise_returns_f():
    np.testing.assert_array_equal(reparameterize_lognormal([2.5, 0.1], [0.3, 0.6], [0.0, 0.0]), [2.5, 0.1])


def test_lognormal_value():
    assert reparameterize_lognormal([1.0], [1.0], [1.0])[0] == math.e


def test_lognormal_overflow_raises():
    with pytest.raises(NumericError):
        reparameterize_lognormal([1.0], [1.0], [1e4])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lognormal_samples_positive(seed):
    rng = np.random.default_rng(seed)
    enc = LogNormalEncoder.create(4, 5, 3, rng)
    u = encode_lognormal(enc, rng.random((6, 4)), rng.standard_normal((6, 3)) * 3)
    assert np.all(u > 0)


def test_lognormal_alpha_below_cap():
    rng = np.random.default_rng(0)
    enc = LogNormalEncoder.create(4, 5, 3, rng)
    _, alpha = enc.moments(rng.random((100, 4)))  # pixel-range inputs
    assert np.all(alpha > 0) and np.all(alpha < 0.7)


def test_kl_lognormal_matched_is_zero():
    terms = kl_lognormal_terms(np.array([0.3]), np.array([0.4]), np.array([0.3]), np.array([0.4]))
    assert abs(terms[0]) <= 1e-15


def test_kl_lognormal_examples():
    assert abs(kl_lognormal_terms(1.0, 1.0, 0.0, 1.0) - 0.5) <= 1e-10
    assert abs(kl_lognormal_terms(0.0, 2.0, 0.0, 1.0) - (1.5 - math.log(2))) <= 1e-10


def test_kl_lognormal_through_encoder():
    enc = _const_lognormal(np.array([0.2]), [0.5], [0.2], [math.log(0.5)])
    assert abs(kl_lognormal(enc, np.zeros((3, 2)))[0]) <= 1e-10


def test_kl_lognormal_alpha_underflow_warns():
    with pytest.warns(ClampWarning):
        kl_lognormal_terms(np.zeros(1), np.zeros(1), np.zeros(1), np.ones(1))


# ----------------------------------------------------------------- RBM
def test_kl_rbm_constant_half():
    assert np.all(kl_rbm_from_activations(np.full((5, 3), 0.5)) == 0.0)


def test_kl_rbm_two_samples():
    got = kl_rbm_from_activations(np.array([[0.25], [0.75]]))[0]
    expected = 0.25 * math.log(0.5) + 0.75 * math.log(1.5)
    assert abs(got - expected) <= 1e-10


def test_kl_rbm_single_sample_is_zero():
    enc = RBMEncoder.create(4, 3, np.random.default_rng(0), scale=1.0)
    np.testing.assert_array_equal(kl_rbm(enc, np.random.default_rng(1).random((1, 4))), 0.0)


def test_kl_rbm_zero_iff_constant_activation():
    rng = np.random.default_rng(5)
    enc = RBMEncoder(np.vstack([np.zeros(4), rng.normal(size=4)]), np.array([0.3, 0.0]), np.zeros(4))
    kl = kl_rbm(enc, rng.random((10, 4)))
    assert abs(kl[0]) <= 1e-15 and kl[1] > 1e-6


def test_kl_rbm_saturated_activations_clamped():
    with pytest.warns(ClampWarning):
        kl = kl_rbm_from_activations(np.array([[0.0], [1.0]]))
    assert np.isfinite(kl).all() and kl[0] > 0


def test_kl_entrywise_nonnegative_on_random_draws():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        mu = rng.normal(0, 3, size=(4, 3))
        var = np.exp(rng.normal(0, 2, size=(4, 3)))
        assert np.all(kl_gaussian_terms(mu, var).mean(axis=0) >= 0)
        a = np.exp(rng.normal(-1, 1, size=(4, 3)))
        sig = np.exp(rng.normal(0, 1, size=3))
        assert np.all(kl_lognormal_terms(rng.normal(size=(4, 3)), a, rng.normal(size=3), sig).mean(axis=0) >= 0)
        p = rng.random((4, 3))
        assert np.all(kl_rbm_from_activations(p) >= 0)


def test_rbm_enumeration_reproduces_average_prior():
    rng = np.random.default_rng(8)
    for m in (1, 4, 10):
        enc = RBMEncoder.create(6, m, rng, scale=1.0)
        x = rng.random((7, 6))
        q = enc.state_probs(x)  # [n, 2^m]
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-12)
        marginal_on = q.mean(axis=0) @ binary_states(m)
        np.testing.assert_allclose(marginal_on, enc.activation(x).mean(axis=0), atol=1e-12)


def test_state_probs_budget():
    enc = RBMEncoder(np.zeros((21, 2)), np.zeros(21), np.zeros(2))
    with pytest.raises(BudgetError):
        enc.state_probs(np.zeros((1, 2)))


def test_encode_rbm_threshold_rule():
    enc = RBMEncoder(np.zeros((2, 3)), np.array([0.0, 100.0]), np.zeros(3))
    np.testing.assert_array_equal(encode_rbm(enc, np.zeros(3), np.array([0.4, 0.9])), [1.0, 1.0])
    np.testing.assert_array_equal(encode_rbm(enc, np.zeros(3), np.array([0.6, 0.9])), [0.0, 1.0])


@pytest.mark.parametrize("family", ["gaussian", "lognormal", "rbm"])
def test_sampling_is_seed_reproducible(family):
    enc = create_encoder(family, 5, 4, 3, np.random.default_rng(0))
    x = np.random.default_rng(1).random((4, 5))
    a = enc.sample(x, np.random.default_rng(9), 8)
    b = enc.sample(x, np.random.default_rng(9), 8)
    np.testing.assert_array_equal(a, b)


# ----------------------------------------------------------------- CD-1
def test_cd1_fixed_point_without_decay():
    vbias = np.array([0.3, -1.2, 0.8])
    enc = RBMEncoder(np.zeros((2, 3)), np.array([0.1, -0.4]), vbias)
    batch = np.tile(1 / (1 + np.exp(-vbias)), (5, 1))
    new, _ = cd1_update(enc, batch, TrainConfig(learning_rate=0.5, lam=0.0), np.random.default_rng(0))
    np.testing.assert_allclose(new.weights, enc.weights, atol=1e-15)
    np.testing.assert_allclose(new.hidden_bias, enc.hidden_bias, atol=1e-15)
    np.testing.assert_allclose(new.visible_bias, enc.visible_bias, atol=1e-15)


def test_cd1_weight_decay_only():
    # saturated hidden units make h0 deterministic, so v1 == v0 and the CD term vanishes
    w = np.array([[0.5, -0.3], [0.2, 0.7]])
    hbias = np.array([60.0, -60.0])
    v0 = np.array([0.35, 0.6])
    cfg = TrainConfig(learning_rate=0.1, lam=0.5)
    rng = np.random.default_rng(3)
    current = w
    for step in range(1, 4):
        # visible bias re-matched so the reconstruction equals the data at the current W
        enc = RBMEncoder(current, hbias, np.log(v0 / (1 - v0)) - current[0])
        enc, _ = cd1_update(enc, v0[None, :], cfg, rng)
        np.testing.assert_allclose(enc.weights, w * (1 - 0.1 * 0.5) ** step, rtol=1e-12)
        current = enc.weights


def _sig(z):
    return 1 / (1 + math.exp(-z))


def test_cd1_matches_hand_trace_2x2():
    w = [[0.2, -0.5], [0.7, 0.1]]  # [hidden][visible]
    hb = [0.1, -0.2]
    vb = [0.05, -0.3]
    batch = [[1.0, 0.0], [0.3, 0.9]]
    lr, lam, seed = 0.1, 0.01, 11
    u = np.random.default_rng(seed).random((2, 2)).tolist()  # same draws cd1_update makes

    gw = [[0.0, 0.0], [0.0, 0.0]]
    gh = [0.0, 0.0]
    gv = [0.0, 0.0]
    for r, v0 in enumerate(batch):
        p0 = [_sig(hb[j] + w[j][0] * v0[0] + w[j][1] * v0[1]) for j in range(2)]
        h0 = [1.0 if u[r][j] < p0[j] else 0.0 for j in range(2)]
        v1 = [_sig(vb[i] + w[0][i] * h0[0] + w[1][i] * h0[1]) for i in range(2)]
        p1 = [_sig(hb[j] + w[j][0] * v1[0] + w[j][1] * v1[1]) for j in range(2)]
        for j in range(2):
            for i in range(2):
                gw[j][i] += (p0[j] * v0[i] - p1[j] * v1[i]) / 2
            gh[j] += (p0[j] - p1[j]) / 2
        for i in range(2):
            gv[i] += (v0[i] - v1[i]) / 2
    w_new = [[w[j][i] + lr * (gw[j][i] - lam * w[j][i]) for i in range(2)] for j in range(2)]
    hb_new = [hb[j] + lr * gh[j] for j in range(2)]
    vb_new = [vb[i] + lr * gv[i] for i in range(2)]

    enc = RBMEncoder(np.array(w), np.array(hb), np.array(vb))
    new, _ = cd1_update(enc, np.array(batch), TrainConfig(learning_rate=lr, lam=lam), np.random.default_rng(seed))
    np.testing.assert_allclose(new.weights, w_new, atol=1e-14)
    np.testing.assert_allclose(new.hidden_bias, hb_new, atol=1e-14)
    np.testing.assert_allclose(new.visible_bias, vb_new, atol=1e-14)


def test_cd1_rejects_wrong_width():
    enc = RBMEncoder.create(3, 2, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        cd1_update(enc, np.zeros((2, 4)), TrainConfig(), np.random.default_rng(0))


# ----------------------------------------------------------------- serialization
@pytest.mark.parametrize("family", ["gaussian", "lognormal", "rbm"])
def test_serialization_round_trip(family, tmp_path):
    rng = np.random.default_rng(4)
    enc = create_encoder(family, 6, 5, 3, rng)
    path = tmp_path / "enc.json"
    save_encoder(enc, path)
    back = load_encoder(path)
    for a, b in zip(enc.params(), back.params()):
        np.testing.assert_array_equal(a, b)
    x = rng.random((3, 6))
    np.testing.assert_array_equal(enc.sample(x, np.random.default_rng(1), 2), back.sample(x, np.random.default_rng(1), 2))


def test_serialization_rejects_bad_documents():
    doc = encoder_to_dict(create_encoder("rbm", 2, 0, 2, np.random.default_rng(0)))
    with pytest.raises(FormatError):
        encoder_from_dict({**doc, "version": 99})
    with pytest.raises(FormatError):
        encoder_from_dict({**doc, "family": "tanh"})
    bad = dict(doc)
    del bad["weights"]
    with pytest.raises(FormatError):
        encoder_from_dict(bad)


def test_unknown_family():
    with pytest.raises(ConfigurationError):
        create_encoder("vae", 2, 2, 2, np.random.default_rng(0))


def test_empty_dataset_is_rejected():
    enc = _const_gaussian(np.zeros(1), np.zeros(1))
    with pytest.raises(ConfigurationError):
        kl_gaussian(enc, np.zeros((0, 3)))
