"""Training objectives with manual gradients and the per-family training loops.

Gaussian and log-normal models minimise
    mean cross-entropy + lam * sum_j mean_i KL_j(x_i)
with reparameterized samples. RBM encoders are trained by CD-1 with weight
decay, then a softmax decoder is fitted on sampled hidden states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classifier import SoftmaxDecoder
from .encoders import (
    PROB_FLOOR,
    GaussianEncoder,
    LogNormalEncoder,
    RBMEncoder,
    cd1_update,
    create_encoder,
)
from .errors import ConfigurationError, NumericError
from .nn import TrainConfig, backward, forward_trace, log_softmax, sgd_step


def _decoder_terms(dec: SoftmaxDecoder, u: np.ndarray, y: np.ndarray):
    """Cross-entropy averaged over samples and rows, with grads w.r.t. u and decoder params."""
    s, n, _ = u.shape
    logp = log_softmax(dec.logits(u))  # [S, n, Y]
    ce = -float(logp[:, np.arange(n), y].mean())
    dlogits = np.exp(logp)
    dlogits[:, np.arange(n), y] -= 1.0
    dlogits /= s * n
    g_w = np.einsum("sny,snm->ym", dlogits, u)
    g_b = dlogits.sum(axis=(0, 1))
    du = dlogits @ dec.weights
    return ce, du, [g_w, g_b]


def gaussian_objective(enc: GaussianEncoder, dec: SoftmaxDecoder, x, y, lam: float, noise):
    """Objective value and gradients; ``noise`` has shape [S, n, m]."""
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    if enc.trunk:
        trunk_trace = forward_trace(enc.trunk, x)
        h = trunk_trace.output
    else:
        h = x
    mu_tr = forward_trace([enc.mu_head], h)
    lv_tr = forward_trace([enc.logvar_head], h)
    mu, lv = mu_tr.output, lv_tr.output
    sigma = np.exp(0.5 * lv)
    u = mu + sigma * noise
    ce, du, dec_grads = _decoder_terms(dec, u, y)

    var = np.exp(lv)
    kl = 0.5 * (-lv + var + mu**2 - 1.0)
    value = ce + lam * float(kl.sum(axis=1).mean())

    d_mu = du.sum(axis=0) + lam * mu / n
    d_lv = (du * noise).sum(axis=0) * 0.5 * sigma + lam * 0.5 * (var - 1.0) / n
    g_mu = backward([enc.mu_head], h, d_mu, mu_tr)
    g_lv = backward([enc.logvar_head], h, d_lv, lv_tr)
    grads = []
    if enc.trunk:
        g_tr = backward(enc.trunk, x, g_mu.inputs + g_lv.inputs, trunk_trace)
        for w, b in zip(g_tr.weights, g_tr.biases):
            grads += [w, b]
    grads += [g_mu.weights[0], g_mu.biases[0], g_lv.weights[0], g_lv.biases[0]]
    return value, grads, dec_grads


def lognormal_objective(enc: LogNormalEncoder, dec: SoftmaxDecoder, x, y, lam: float, noise):
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    f_tr = forward_trace(enc.f_net, x)
    a_tr = forward_trace(enc.alpha_net, x)
    f = np.maximum(f_tr.output, PROB_FLOOR)
    alpha = np.maximum(enc.alpha_scale * a_tr.output, PROB_FLOOR)
    growth = np.exp(alpha * noise)
    u = f * growth
    if not np.all(np.isfinite(u)):
        raise NumericError("overflow in log-normal sample")
    ce, du, dec_grads = _decoder_terms(dec, u, y)

    mu0 = enc.prior_mu
    sig2 = np.exp(2.0 * enc.prior_logsigma)
    logf = np.log(f)
    diff = logf - mu0
    sq = alpha**2 + diff**2
    kl = sq / (2.0 * sig2) - np.log(alpha) + enc.prior_logsigma - 0.5
    value = ce + lam * float(kl.sum(axis=1).mean())

    d_f = (du * growth).sum(axis=0) + lam * diff / (sig2 * f) / n
    d_alpha = (du * u * noise).sum(axis=0) + lam * (alpha / sig2 - 1.0 / alpha) / n
    d_mu0 = -lam * (diff / sig2).sum(axis=0) / n
    d_ls = lam * (1.0 - sq / sig2).sum(axis=0) / n

    g_f = backward(enc.f_net, x, d_f, f_tr)
    g_a = backward(enc.alpha_net, x, enc.alpha_scale * d_alpha, a_tr)
    grads = []
    for g in (g_f, g_a):
        for w, b in zip(g.weights, g.biases):
            grads += [w, b]
    grads += [d_mu0, d_ls]
    return value, grads, dec_grads


def objective(enc, dec, x, y, lam, noise):
    if isinstance(enc, GaussianEncoder):
        return gaussian_objective(enc, dec, x, y, lam, noise)
    if isinstance(enc, LogNormalEncoder):
        return lognormal_objective(enc, dec, x, y, lam, noise)
    raise ConfigurationError(f"no joint objective for {type(enc).__name__}")


def decoder_objective(dec: SoftmaxDecoder, u, y):
    """Cross-entropy of a decoder on fixed representations ``u`` [S, n, m]."""
    ce, _, grads = _decoder_terms(dec, np.asarray(u, dtype=np.float64), np.asarray(y, dtype=np.int64))
    return ce, grads


@dataclass
class TrainSpec:
    """Architecture and optimisation settings for one training run."""

    family: str = "gaussian"
    hidden: int = 128
    m: int = 64
    train: TrainConfig = field(default_factory=TrainConfig)
    mc_samples: int = 64
    decoder_train: TrainConfig | None = None  # RBM only


@dataclass
class TrainResult:
    encoder: object
    decoder: SoftmaxDecoder
    curve: list[float]
    decoder_curve: list[float] = field(default_factory=list)


def _check_finite(value: float, epoch: int) -> None:
    if not math.isfinite(value):
        raise NumericError(f"non-finite training objective at epoch {epoch}")


def _train_joint(spec: TrainSpec, x, y, n_labels: int, rng: np.random.Generator) -> TrainResult:
    cfg = spec.train
    enc = create_encoder(spec.family, x.shape[1], spec.hidden, spec.m, rng)
    dec = SoftmaxDecoder.create(spec.m, n_labels, rng)
    n = x.shape[0]
    # fixed draws make the per-epoch curve comparable across epochs
    eval_noise = np.random.default_rng([cfg.rng_seed, 1]).standard_normal((8, n, spec.m))
    vel_e = vel_d = None
    curve = []
    for epoch in range(cfg.epochs):
        mom = cfg.momentum_at(epoch)
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            noise = rng.standard_normal((spec.mc_samples, idx.size, spec.m))
            value, ge, gd = objective(enc, dec, x[idx], y[idx], cfg.lam, noise)
            _check_finite(value, epoch)
            pe, vel_e = sgd_step(enc.params(), ge, cfg, vel_e, momentum=mom)
            pd, vel_d = sgd_step(dec.params(), gd, cfg, vel_d, momentum=mom)
            enc, dec = enc.with_params(pe), dec.with_params(pd)
        value = objective(enc, dec, x, y, cfg.lam, eval_noise)[0]
        _check_finite(value, epoch)
        curve.append(value)
    return TrainResult(enc, dec, curve)


def _train_rbm(spec: TrainSpec, x, y, n_labels: int, rng: np.random.Generator) -> TrainResult:
    cfg = spec.train
    enc = RBMEncoder.create(x.shape[1], spec.m, rng)
    n = x.shape[0]
    vel = None
    curve = []
    for epoch in range(cfg.epochs):
        mom = cfg.momentum_at(epoch)
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            enc, vel = cd1_update(enc, x[order[start:start + cfg.batch_size]], cfg, rng, vel, momentum=mom)
        # mean-field reconstruction error as the CD progress signal
        p = enc.activation(x)
        recon = 1.0 / (1.0 + np.exp(-(p @ enc.weights + enc.visible_bias)))
        err = float(np.mean((x - recon) ** 2))
        _check_finite(err, epoch)
        curve.append(err)

    dcfg = spec.decoder_train or cfg.with_(lam=0.0)
    dec = SoftmaxDecoder.create(spec.m, n_labels, rng)
    dvel = None
    dcurve = []
    p_all = enc.activation(x)
    for epoch in range(dcfg.epochs):
        mom = dcfg.momentum_at(epoch)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, dcfg.batch_size):
            idx = order[start:start + dcfg.batch_size]
            u = (rng.random((1, idx.size, spec.m)) < p_all[idx]).astype(np.float64)
            value, gd = decoder_objective(dec, u, y[idx])
            _check_finite(value, epoch)
            pd, dvel = sgd_step(dec.params(), gd, dcfg, dvel, momentum=mom)
            dec = dec.with_params(pd)
            total += value * idx.size
        dcurve.append(total / n)
    return TrainResult(enc, dec, curve, dcurve)


def train_model(spec: TrainSpec, x, y, n_labels: int | None = None) -> TrainResult:
    """Train an encoder/decoder pair; deterministic given ``spec.train.rng_seed``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ConfigurationError("training set is empty")
    n_labels = int(y.max()) + 1 if n_labels is None else n_labels
    rng = np.random.default_rng(spec.train.rng_seed)
    with np.errstate(over="ignore", under="ignore"):
        if spec.family in ("gaussian", "lognormal"):
            return _train_joint(spec, x, y, n_labels, rng)
        if spec.family == "rbm":
            return _train_rbm(spec, x, y, n_labels, rng)
    raise ConfigurationError(f"unsupported encoder family {spec.family!r}")
