"""Dense layers with manual backpropagation and SGD with momentum.

Everything runs in float64. Inputs may be a single vector ``[d]`` or a batch
``[n, d]``; outputs follow the same rank.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, NumericError

ACTIVATIONS = ("identity", "relu", "sigmoid", "softplus")


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    z = np.asarray(z, dtype=np.float64)
    return np.logaddexp(0.0, z)


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shift = logits - logits.max(axis=-1, keepdims=True)
    return shift - np.log(np.exp(shift).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def activate(name: str, z):
    if name == "identity":
        return np.asarray(z, dtype=np.float64)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "softplus":
        return softplus(z)
    raise ConfigurationError(f"unknown activation {name!r}")


def activation_derivative(name: str, z):
    """Derivative of the activation evaluated at the pre-activation ``z``."""
    if name == "identity":
        return np.ones_like(z, dtype=np.float64)
    if name == "relu":
        return (np.asarray(z) > 0).astype(np.float64)
    if name == "sigmoid":
        s = sigmoid(z)
        return s * (1.0 - s)
    if name == "softplus":
        return sigmoid(z)
    raise ConfigurationError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # [out, in]
    biases: np.ndarray  # [out]
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ConfigurationError(
                f"layer shapes inconsistent: weights {self.weights.shape}, biases {self.biases.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise NumericError("layer parameters must be finite")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.biases.copy(), self.activation)


def init_layer(n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> DenseLayer:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
    bound = 1.0 / np.sqrt(n_in)
    w = rng.uniform(-bound, bound, size=(n_out, n_in))
    b = rng.uniform(-bound, bound, size=n_out)
    return DenseLayer(w, b, activation)


def init_stack(sizes: Sequence[int], activations: Sequence[str], rng: np.random.Generator) -> list[DenseLayer]:
    if len(sizes) != len(activations) + 1:
        raise ConfigurationError("need one activation per layer")
    return [init_layer(a, b, act, rng) for a, b, act in zip(sizes[:-1], sizes[1:], activations)]


@dataclass
class Trace:
    """Cached pre-activations and activations from a forward pass."""

    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    output: np.ndarray | None = None


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ConfigurationError(f"expected vector or matrix input, got shape {x.shape}")
    return x, False


def forward_trace(layers: Sequence[DenseLayer], x) -> Trace:
    h, _ = _as_batch(x)
    if not layers:
        raise ConfigurationError("empty layer stack")
    if h.shape[1] != layers[0].n_in:
        raise ConfigurationError(f"input dimension {h.shape[1]} != layer input {layers[0].n_in}")
    if not np.all(np.isfinite(h)):
        raise NumericError("non-finite input")
    trace = Trace()
    for layer in layers:
        if h.shape[1] != layer.n_in:
            raise ConfigurationError(f"dimension mismatch: {h.shape[1]} -> layer expecting {layer.n_in}")
        trace.inputs.append(h)
        z = h @ layer.weights.T + layer.biases
        trace.pre.append(z)
        h = activate(layer.activation, z)
    trace.output = h
    return trace


def forward(layers: Sequence[DenseLayer], x) -> np.ndarray:
    """Activations of the final layer."""
    single = np.asarray(x).ndim == 1
    out = forward_trace(layers, x).output
    return out[0] if single else out


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray  # gradient w.r.t. the stack input, same rank as x


def backward(layers: Sequence[DenseLayer], x, upstream, trace: Trace | None = None) -> Gradients:
    """Parameter gradients for a scalar loss whose output gradient is ``upstream``.

    For batched ``x`` the per-row contributions are summed.
    """
    if trace is None:
        trace = forward_trace(layers, x)
    single = np.asarray(x).ndim == 1
    g, _ = _as_batch(upstream)
    if g.shape != trace.output.shape:
        raise ConfigurationError(f"upstream gradient shape {g.shape} != output shape {trace.output.shape}")
    gw: list[np.ndarray] = [None] * len(layers)  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * len(layers)  # type: ignore[list-item]
    for idx in range(len(layers) - 1, -1, -1):
        layer = layers[idx]
        dz = g * activation_derivative(layer.activation, trace.pre[idx])
        gw[idx] = dz.T @ trace.inputs[idx]
        gb[idx] = dz.sum(axis=0)
        g = dz @ layer.weights
    for arr in (*gw, *gb):
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite gradient")
    return Gradients(gw, gb, g[0] if single else g)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 100
    epochs: int = 200
    momentum: float = 0.0
    lam: float = 0.0
    rng_seed: int = 0
    final_momentum: float | None = None
    momentum_switch_epoch: int = 5

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("batch_size and epochs must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.final_momentum is not None and not 0.0 <= self.final_momentum < 1.0:
            raise ConfigurationError("final_momentum must lie in [0, 1)")
        if self.lam < 0:
            raise ConfigurationError("lambda must be >= 0")

    def momentum_at(self, epoch: int) -> float:
        if self.final_momentum is not None and epoch >= self.momentum_switch_epoch:
            return self.final_momentum
        return self.momentum

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def sgd_step(params, grads, config: TrainConfig, velocity=None, momentum: float | None = None):
    """v <- momentum*v - lr*g ; p <- p + v. Returns new (params, velocity) lists."""
    if len(params) != len(grads):
        raise ConfigurationError("params and grads differ in length")
    mom = config.momentum if momentum is None else momentum
    if velocity is None:
        velocity = [np.zeros_like(p, dtype=np.float64) for p in params]
    new_p, new_v = [], []
    for p, g, v in zip(params, grads, velocity):
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if p.shape != g.shape or p.shape != np.shape(v):
            raise ConfigurationError(f"shape mismatch in sgd_step: {p.shape}, {g.shape}, {np.shape(v)}")
        v2 = mom * v - config.learning_rate * g
        new_v.append(v2)
        new_p.append(p + v2)
    return new_p, new_v


def stack_params(layers: Sequence[DenseLayer]) -> list[np.ndarray]:
    out = []
    for layer in layers:
        out += [layer.weights, layer.biases]
    return out


def stack_grads(grads: Gradients) -> list[np.ndarray]:
    out = []
    for w, b in zip(grads.weights, grads.biases):
        out += [w, b]
    return out


def rebuild_stack(layers: Sequence[DenseLayer], flat: Sequence[np.ndarray]) -> list[DenseLayer]:
    return [DenseLayer(flat[2 * i], flat[2 * i + 1], layer.activation) for i, layer in enumerate(layers)]
