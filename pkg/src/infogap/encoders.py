"""Stochastic encoders q(u|x): Gaussian, log-normal and Bernoulli (RBM).

Each family exposes reparameterized sampling, its per-unit closed-form KL
against the family prior averaged over an input sample, and a log-density
used by the quantizer to build the quantized decoder.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import BudgetError, ConfigurationError, FormatError, NumericError
from .nn import DenseLayer, TrainConfig, forward, init_layer, init_stack, sigmoid

PROB_FLOOR = 1e-12
SCHEMA_VERSION = 1
ENUMERATION_LIMIT = 20


class ClampWarning(RuntimeWarning):
    """A probability or scale hit the 1e-12 floor before a logarithm."""


def as_inputs(data) -> np.ndarray:
    """Flattened ``[n, d]`` inputs from an array or a dataset object."""
    if hasattr(data, "inputs"):
        data = data.inputs
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ConfigurationError(f"inputs must be 2-D, got {x.shape}")
    return x


def _nonempty(x: np.ndarray) -> None:
    if x.shape[0] == 0:
        raise ConfigurationError("dataset is empty")


def _clamp(values: np.ndarray, lo: float, hi: float | None, what: str) -> np.ndarray:
    clipped = np.clip(values, lo, hi) if hi is not None else np.maximum(values, lo)
    if np.any(clipped != values):
        warnings.warn(f"{what} clamped into [{lo}, {hi if hi is not None else 'inf'}]", ClampWarning, stacklevel=3)
    return clipped


# --------------------------------------------------------------------------- Gaussian


@dataclass
class GaussianEncoder:
    trunk: list[DenseLayer]
    mu_head: DenseLayer
    logvar_head: DenseLayer

    family = "gaussian"

    def __post_init__(self):
        if self.mu_head.n_out != self.logvar_head.n_out:
            raise ConfigurationError("mu and logvar heads must have the same width")
        width = self.trunk[-1].n_out if self.trunk else None
        if width is not None and (self.mu_head.n_in != width or self.logvar_head.n_in != width):
            raise ConfigurationError("head input width must match the trunk output")

    @classmethod
    def create(cls, d: int, hidden: int, m: int, rng: np.random.Generator) -> "GaussianEncoder":
        trunk = [init_layer(d, hidden, "relu", rng)]
        return cls(trunk, init_layer(hidden, m, "identity", rng), init_layer(hidden, m, "identity", rng))

    @property
    def m(self) -> int:
        return self.mu_head.n_out

    @property
    def d(self) -> int:
        return self.trunk[0].n_in if self.trunk else self.mu_head.n_in

    def _hidden(self, x):
        return forward(self.trunk, x) if self.trunk else np.asarray(x, dtype=np.float64)

    def moments(self, x):
        """(mu, logvar) for each input row."""
        h = self._hidden(as_inputs(x))
        return forward([self.mu_head], h), forward([self.logvar_head], h)

    def sample(self, x, rng: np.random.Generator, n_samples: int, noise=None) -> np.ndarray:
        mu, logvar = self.moments(x)
        if noise is None:
            noise = rng.standard_normal((n_samples,) + mu.shape)
        return reparameterize_gaussian(mu, np.exp(0.5 * logvar), noise)

    def log_density(self, x, u) -> np.ndarray:
        """log q(u_b | x_k) as a ``[K, B]`` matrix."""
        mu, logvar = self.moments(x)
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        var = np.exp(logvar)
        diff = u[None, :, :] - mu[:, None, :]
        return -0.5 * np.sum(diff**2 / var[:, None, :] + logvar[:, None, :] + np.log(2 * np.pi), axis=2)

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in (*self.trunk, self.mu_head, self.logvar_head):
            out += [layer.weights, layer.biases]
        return out

    def with_params(self, flat: Sequence[np.ndarray]) -> "GaussianEncoder":
        layers = [*self.trunk, self.mu_head, self.logvar_head]
        new = [DenseLayer(flat[2 * i], flat[2 * i + 1], layer.activation) for i, layer in enumerate(layers)]
        return GaussianEncoder(new[:-2], new[-2], new[-1])


def reparameterize_gaussian(mu, sigma, z) -> np.ndarray:
    """u = mu + sigma * z (broadcasting over leading sample axes of z)."""
    return np.asarray(mu, dtype=np.float64) + np.asarray(sigma, dtype=np.float64) * np.asarray(z, dtype=np.float64)


def encode_gaussian(enc: GaussianEncoder, x, noise) -> np.ndarray:
    mu, logvar = enc.moments(x)
    single = np.asarray(x).ndim == 1
    u = reparameterize_gaussian(mu, np.exp(0.5 * logvar), noise if not single else np.asarray(noise)[None, :])
    return u[0] if single else u


def kl_gaussian_terms(mu, var) -> np.ndarray:
    """Per-sample, per-unit KL( N(mu, var) || N(0, 1) )."""
    var = _clamp(np.asarray(var, dtype=np.float64), PROB_FLOOR, None, "variance")
    mu = np.asarray(mu, dtype=np.float64)
    return 0.5 * (-np.log(var) + var + mu**2 - 1.0)


def kl_gaussian(enc: GaussianEncoder, dataset) -> np.ndarray:
    x = as_inputs(dataset)
    _nonempty(x)
    mu, logvar = enc.moments(x)
    return kl_gaussian_terms(mu, np.exp(logvar)).mean(axis=0)


# --------------------------------------------------------------------------- log-normal


@dataclass
class LogNormalEncoder:
    f_net: list[DenseLayer]
    alpha_net: list[DenseLayer]
    prior_mu: np.ndarray
    prior_logsigma: np.ndarray
    alpha_scale: float = 0.7

    family = "lognormal"

    def __post_init__(self):
        self.prior_mu = np.asarray(self.prior_mu, dtype=np.float64)
        self.prior_logsigma = np.asarray(self.prior_logsigma, dtype=np.float64)
        m = self.f_net[-1].n_out
        if self.alpha_net[-1].n_out != m or self.prior_mu.shape != (m,) or self.prior_logsigma.shape != (m,):
            raise ConfigurationError("f, alpha and prior widths must agree")
        if self.f_net[-1].activation != "softplus":
            raise ConfigurationError("f network must end in softplus so f(x) > 0")
        if self.alpha_net[-1].activation != "sigmoid":
            raise ConfigurationError("alpha network must end in sigmoid")

    @classmethod
    def create(cls, d: int, hidden: int, m: int, rng: np.random.Generator) -> "LogNormalEncoder":
        f_net = init_stack([d, hidden, m], ["softplus", "softplus"], rng)
        alpha_net = init_stack([d, m], ["sigmoid"], rng)
        return cls(f_net, alpha_net, np.zeros(m), np.zeros(m))

    @property
    def m(self) -> int:
        return self.f_net[-1].n_out

    @property
    def d(self) -> int:
        return self.f_net[0].n_in

    def moments(self, x):
        """(f, alpha) for each input row; alpha = alpha_scale * sigmoid(.)."""
        x = as_inputs(x)
        return forward(self.f_net, x), self.alpha_scale * forward(self.alpha_net, x)

    def sample(self, x, rng: np.random.Generator, n_samples: int, noise=None) -> np.ndarray:
        f, alpha = self.moments(x)
        if noise is None:
            noise = rng.standard_normal((n_samples,) + f.shape)
        return reparameterize_lognormal(f, alpha, noise)

    def log_density(self, x, u) -> np.ndarray:
        f, alpha = self.moments(x)
        logf = np.log(np.maximum(f, PROB_FLOOR))
        alpha = np.maximum(alpha, PROB_FLOOR)
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        logu = np.log(np.maximum(u, PROB_FLOOR))
        diff = logu[None, :, :] - logf[:, None, :]
        return -np.sum(
            0.5 * diff**2 / alpha[:, None, :] ** 2 + np.log(alpha)[:, None, :] + logu[None, :, :] + 0.5 * np.log(2 * np.pi),
            axis=2,
        )

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in (*self.f_net, *self.alpha_net):
            out += [layer.weights, layer.biases]
        return out + [self.prior_mu, self.prior_logsigma]

    def with_params(self, flat: Sequence[np.ndarray]) -> "LogNormalEncoder":
        layers = [*self.f_net, *self.alpha_net]
        new = [DenseLayer(flat[2 * i], flat[2 * i + 1], layer.activation) for i, layer in enumerate(layers)]
        nf = len(self.f_net)
        return LogNormalEncoder(new[:nf], new[nf:], flat[-2], flat[-1], self.alpha_scale)


def reparameterize_lognormal(f, alpha, z) -> np.ndarray:
    """u = f * exp(alpha * z)."""
    with np.errstate(over="raise"):
        try:
            return np.asarray(f, dtype=np.float64) * np.exp(np.asarray(alpha, dtype=np.float64) * np.asarray(z, dtype=np.float64))
        except FloatingPointError as exc:
            raise NumericError("overflow in log-normal sample") from exc


def encode_lognormal(enc: LogNormalEncoder, x, noise) -> np.ndarray:
    f, alpha = enc.moments(x)
    single = np.asarray(x).ndim == 1
    u = reparameterize_lognormal(f, alpha, noise if not single else np.asarray(noise)[None, :])
    return u[0] if single else u


def kl_lognormal_terms(log_f, alpha, prior_mu, prior_sigma) -> np.ndarray:
    """Per-sample, per-unit KL( logN(log f, alpha^2) || logN(mu, sigma^2) )."""
    alpha = _clamp(np.asarray(alpha, dtype=np.float64), PROB_FLOOR, None, "alpha")
    sigma = np.asarray(prior_sigma, dtype=np.float64)
    diff = np.asarray(log_f, dtype=np.float64) - np.asarray(prior_mu, dtype=np.float64)
    return (alpha**2 + diff**2) / (2.0 * sigma**2) - np.log(alpha / sigma) - 0.5


def kl_lognormal(enc: LogNormalEncoder, dataset) -> np.ndarray:
    x = as_inputs(dataset)
    _nonempty(x)
    f, alpha = enc.moments(x)
    log_f = np.log(_clamp(f, PROB_FLOOR, None, "f"))
    return kl_lognormal_terms(log_f, alpha, enc.prior_mu, np.exp(enc.prior_logsigma)).mean(axis=0)


# --------------------------------------------------------------------------- RBM


@dataclass
class RBMEncoder:
    weights: np.ndarray  # [m, d]
    hidden_bias: np.ndarray  # [m]
    visible_bias: np.ndarray  # [d]

    family = "rbm"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
        self.visible_bias = np.asarray(self.visible_bias, dtype=np.float64)
        m, d = self.weights.shape
        if self.hidden_bias.shape != (m,) or self.visible_bias.shape != (d,):
            raise ConfigurationError("RBM bias shapes do not match the weight matrix")
        for arr in (self.weights, self.hidden_bias, self.visible_bias):
            if not np.all(np.isfinite(arr)):
                raise NumericError("RBM parameters must be finite")

    @classmethod
    def create(cls, d: int, m: int, rng: np.random.Generator, scale: float = 0.01) -> "RBMEncoder":
        return cls(rng.normal(0.0, scale, size=(m, d)), np.zeros(m), np.zeros(d))

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def activation(self, x) -> np.ndarray:
        """P(U_j = 1 | x) = sigmoid(b_j + <w_j, x>) for each row."""
        return sigmoid(as_inputs(x) @ self.weights.T + self.hidden_bias)

    def sample(self, x, rng: np.random.Generator, n_samples: int, noise=None) -> np.ndarray:
        p = self.activation(x)
        if noise is None:
            noise = rng.random((n_samples,) + p.shape)
        return (noise < p).astype(np.float64)

    def state_probs(self, x) -> np.ndarray:
        """q(u|x) over all 2^m binary states; bit j of the state index is unit j."""
        if self.m > ENUMERATION_LIMIT:
            raise BudgetError(f"enumeration over 2^{self.m} states exceeds the 2^{ENUMERATION_LIMIT} budget")
        return kernels.binary_state_probs(self.activation(x))

    def log_density(self, x, u) -> np.ndarray:
        p = np.clip(self.activation(x), PROB_FLOOR, 1 - PROB_FLOOR)
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        return np.log(p) @ u.T + np.log1p(-p) @ (1.0 - u).T

    def params(self) -> list[np.ndarray]:
        return [self.weights, self.hidden_bias, self.visible_bias]

    def with_params(self, flat: Sequence[np.ndarray]) -> "RBMEncoder":
        return RBMEncoder(*flat)


def binary_states(m: int) -> np.ndarray:
    """All u in {0,1}^m as rows, ordered so that bit j of the row index is unit j."""
    if m > ENUMERATION_LIMIT:
        raise BudgetError(f"2^{m} states exceeds the enumeration budget")
    idx = np.arange(1 << m)
    return ((idx[:, None] >> np.arange(m)) & 1).astype(np.float64)


def encode_rbm(enc: RBMEncoder, x, noise) -> np.ndarray:
    """Bernoulli sample from uniform noise: u_j = 1 iff noise_j < P(U_j = 1 | x)."""
    p = enc.activation(x)
    single = np.asarray(x).ndim == 1
    u = (np.asarray(noise) < (p[0] if single else p)).astype(np.float64)
    return u


def kl_rbm_from_activations(p) -> np.ndarray:
    """Per-unit KL of each Bernoulli posterior to the dataset-averaged prior."""
    p = _clamp(np.asarray(p, dtype=np.float64), PROB_FLOOR, 1 - PROB_FLOOR, "activation")
    pbar = p.mean(axis=0)
    kl = p * np.log(p / pbar) + (1.0 - p) * np.log((1.0 - p) / (1.0 - pbar))
    # Jensen gap is >= 0; round-off can leave -1e-17
    return np.maximum(kl.mean(axis=0), 0.0)


def kl_rbm(enc: RBMEncoder, dataset) -> np.ndarray:
    x = as_inputs(dataset)
    _nonempty(x)
    return kl_rbm_from_activations(enc.activation(x))


def cd1_update(
    enc: RBMEncoder,
    batch,
    config: TrainConfig,
    rng: np.random.Generator,
    velocity: list[np.ndarray] | None = None,
    momentum: float | None = None,
):
    """One CD-1 step with weight decay ``config.lam`` on W.

    Sampled hidden states drive the reconstruction; hidden probabilities enter
    both the positive and negative statistics. Visible units are reconstructed
    as probabilities. Returns ``(new_encoder, velocity)``.
    """
    v0 = as_inputs(batch)
    if v0.shape[1] != enc.d:
        raise ConfigurationError(f"batch width {v0.shape[1]} != visible units {enc.d}")
    b = v0.shape[0]
    p0 = sigmoid(v0 @ enc.weights.T + enc.hidden_bias)
    h0 = (rng.random(p0.shape) < p0).astype(np.float64)
    v1 = sigmoid(h0 @ enc.weights + enc.visible_bias)
    p1 = sigmoid(v1 @ enc.weights.T + enc.hidden_bias)

    # descent direction of CD + (lam/2)||W||^2
    g_w = -(p0.T @ v0 - p1.T @ v1) / b + config.lam * enc.weights
    g_h = -(p0 - p1).mean(axis=0)
    g_v = -(v0 - v1).mean(axis=0)

    mom = config.momentum if momentum is None else momentum
    if velocity is None:
        velocity = [np.zeros_like(enc.weights), np.zeros_like(enc.hidden_bias), np.zeros_like(enc.visible_bias)]
    new_vel = [mom * v - config.learning_rate * g for v, g in zip(velocity, (g_w, g_h, g_v))]
    new = RBMEncoder(enc.weights + new_vel[0], enc.hidden_bias + new_vel[1], enc.visible_bias + new_vel[2])
    return new, new_vel


# --------------------------------------------------------------------------- serialization


def _layer_doc(layer: DenseLayer) -> dict:
    return {
        "shape": list(layer.weights.shape),
        "activation": layer.activation,
        "weights": layer.weights.ravel().tolist(),
        "biases": layer.biases.tolist(),
    }


def _layer_from(doc: dict) -> DenseLayer:
    try:
        w = np.asarray(doc["weights"], dtype=np.float64).reshape(doc["shape"])
        return DenseLayer(w, np.asarray(doc["biases"], dtype=np.float64), doc["activation"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"malformed layer document: {exc}") from exc


def encoder_to_dict(enc) -> dict:
    doc: dict = {"version": SCHEMA_VERSION, "family": enc.family}
    if isinstance(enc, GaussianEncoder):
        doc["trunk"] = [_layer_doc(layer) for layer in enc.trunk]
        doc["mu_head"] = _layer_doc(enc.mu_head)
        doc["logvar_head"] = _layer_doc(enc.logvar_head)
        doc["prior"] = {"kind": "standard_normal"}
    elif isinstance(enc, LogNormalEncoder):
        doc["f_net"] = [_layer_doc(layer) for layer in enc.f_net]
        doc["alpha_net"] = [_layer_doc(layer) for layer in enc.alpha_net]
        doc["alpha_scale"] = enc.alpha_scale
        doc["prior"] = {"kind": "lognormal", "mu": enc.prior_mu.tolist(), "logsigma": enc.prior_logsigma.tolist()}
    elif isinstance(enc, RBMEncoder):
        doc["shape"] = list(enc.weights.shape)
        doc["weights"] = enc.weights.ravel().tolist()
        doc["hidden_bias"] = enc.hidden_bias.tolist()
        doc["visible_bias"] = enc.visible_bias.tolist()
        doc["prior"] = {"kind": "dataset_average"}
    else:
        raise ConfigurationError(f"unsupported encoder type {type(enc).__name__}")
    return doc


def encoder_from_dict(doc: dict):
    if doc.get("version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported encoder schema version {doc.get('version')!r}")
    family = doc.get("family")
    try:
        if family == "gaussian":
            return GaussianEncoder(
                [_layer_from(d) for d in doc["trunk"]], _layer_from(doc["mu_head"]), _layer_from(doc["logvar_head"])
            )
        if family == "lognormal":
            prior = doc["prior"]
            return LogNormalEncoder(
                [_layer_from(d) for d in doc["f_net"]],
                [_layer_from(d) for d in doc["alpha_net"]],
                np.asarray(prior["mu"]),
                np.asarray(prior["logsigma"]),
                float(doc.get("alpha_scale", 0.7)),
            )
        if family == "rbm":
            w = np.asarray(doc["weights"], dtype=np.float64).reshape(doc["shape"])
            return RBMEncoder(w, np.asarray(doc["hidden_bias"]), np.asarray(doc["visible_bias"]))
    except KeyError as exc:
        raise FormatError(f"encoder document missing field {exc}") from exc
    raise FormatError(f"unknown encoder family {family!r}")


def save_encoder(enc, path) -> None:
    Path(path).write_text(json.dumps(encoder_to_dict(enc)))


def load_encoder(path):
    return encoder_from_dict(json.loads(Path(path).read_text()))


def create_encoder(family: str, d: int, hidden: int, m: int, rng: np.random.Generator):
    if family == "gaussian":
        return GaussianEncoder.create(d, hidden, m, rng)
    if family == "lognormal":
        return LogNormalEncoder.create(d, hidden, m, rng)
    if family == "rbm":
        return RBMEncoder.create(d, m, rng)
    raise ConfigurationError(f"unsupported encoder family {family!r}")


def kl_per_unit(enc, dataset) -> np.ndarray:
    """Dispatch to the family's closed-form per-unit KL."""
    if isinstance(enc, GaussianEncoder):
        return kl_gaussian(enc, dataset)
    if isinstance(enc, LogNormalEncoder):
        return kl_lognormal(enc, dataset)
    if isinstance(enc, RBMEncoder):
        return kl_rbm(enc, dataset)
    raise ConfigurationError(f"unsupported encoder family {type(enc).__name__}")
