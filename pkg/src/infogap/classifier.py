"""Softmax decoder, cross-entropy loss, empirical risk and the gap quantile."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encoders import PROB_FLOOR, RBMEncoder, as_inputs, binary_states
from .errors import ConfigurationError
from .nn import log_softmax, softmax


@dataclass
class SoftmaxDecoder:
    weights: np.ndarray  # [|Y|, m]
    biases: np.ndarray  # [|Y|]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ConfigurationError("decoder weights/biases shapes disagree")

    @classmethod
    def create(cls, m: int, n_labels: int, rng: np.random.Generator) -> "SoftmaxDecoder":
        bound = 1.0 / math.sqrt(m)
        return cls(rng.uniform(-bound, bound, (n_labels, m)), rng.uniform(-bound, bound, n_labels))

    @property
    def n_labels(self) -> int:
        return self.weights.shape[0]

    @property
    def m(self) -> int:
        return self.weights.shape[1]

    def logits(self, u) -> np.ndarray:
        return np.asarray(u, dtype=np.float64) @ self.weights.T + self.biases

    def log_prob(self, u) -> np.ndarray:
        return log_softmax(self.logits(u))

    def params(self) -> list[np.ndarray]:
        return [self.weights, self.biases]

    def with_params(self, flat: Sequence[np.ndarray]) -> "SoftmaxDecoder":
        return SoftmaxDecoder(flat[0], flat[1])

    def to_dict(self) -> dict:
        return {"shape": list(self.weights.shape), "weights": self.weights.ravel().tolist(), "biases": self.biases.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "SoftmaxDecoder":
        return cls(np.asarray(doc["weights"], dtype=np.float64).reshape(doc["shape"]), np.asarray(doc["biases"]))


def decoder_prob(dec: SoftmaxDecoder, u) -> np.ndarray:
    """Q(.|u) for a single u or a batch of rows."""
    return softmax(dec.logits(u))


@dataclass
class LossEstimate:
    mean: float
    std: float
    n_samples: int
    clamped: bool = False

    def __float__(self) -> float:
        return float(self.mean)

    @property
    def std_error(self) -> float:
        return self.std / math.sqrt(self.n_samples)


def as_xy(data):
    """(inputs [n, d], labels [n]) from a dataset object or a tuple."""
    if hasattr(data, "inputs") and hasattr(data, "labels"):
        return as_inputs(data), np.asarray(data.labels, dtype=np.int64)
    x, y = data
    return as_inputs(x), np.asarray(y, dtype=np.int64).reshape(-1)


def sample_loss(enc, dec: SoftmaxDecoder, x, y: int, mc_samples: int, rng: np.random.Generator) -> LossEstimate:
    """Monte Carlo estimate of E_q[-log Q(y|U) | X=x]."""
    if mc_samples < 1:
        raise ConfigurationError("mc_samples must be >= 1")
    u = enc.sample(as_inputs(x), rng, mc_samples)[:, 0, :]
    logq = dec.log_prob(u)[:, int(y)]
    losses = -logq
    std = float(losses.std(ddof=1)) if mc_samples > 1 else 0.0
    return LossEstimate(float(losses.mean()), std, mc_samples, bool(np.any(logq < math.log(PROB_FLOOR))))


def exact_loss_binary(enc: RBMEncoder, dec: SoftmaxDecoder, x, y: int) -> float:
    """Sum over u in {0,1}^m of q(u|x) * (-log Q(y|u))."""
    q = enc.state_probs(as_inputs(x))[0]
    logq = dec.log_prob(binary_states(enc.m))[:, int(y)]
    return float(-(q @ logq))


def exact_loss_table(enc: RBMEncoder, dec: SoftmaxDecoder, x) -> np.ndarray:
    """Exact loss for every (input row, label) pair, ``[n, |Y|]``."""
    q = enc.state_probs(as_inputs(x))
    return -(q @ dec.log_prob(binary_states(enc.m)))


@dataclass
class LossTable:
    losses: np.ndarray  # [n, |Y|] Monte Carlo loss for every label
    min_prob: float  # smallest decoder probability seen across all draws (eta probe)
    u_low: np.ndarray  # elementwise min/max of sampled u, for the bounding box volume
    u_high: np.ndarray


def loss_table(enc, dec: SoftmaxDecoder, x, mc_samples: int, rng: np.random.Generator, chunk: int = 64) -> LossTable:
    """Per-sample Monte Carlo losses for all labels, sharing the u draws across labels."""
    if mc_samples < 1:
        raise ConfigurationError("mc_samples must be >= 1")
    x = as_inputs(x)
    out = np.empty((x.shape[0], dec.n_labels))
    min_logp = np.inf
    lo = np.full(dec.m, np.inf)
    hi = np.full(dec.m, -np.inf)
    for start in range(0, x.shape[0], chunk):
        u = enc.sample(x[start:start + chunk], rng, mc_samples)  # [S, c, m]
        logp = dec.log_prob(u)
        out[start:start + chunk] = -logp.mean(axis=0)
        min_logp = min(min_logp, float(logp.min()))
        lo = np.minimum(lo, u.min(axis=(0, 1)))
        hi = np.maximum(hi, u.max(axis=(0, 1)))
    return LossTable(out, max(math.exp(min_logp), PROB_FLOOR), lo, hi)


def per_sample_losses(enc, dec, data, mc_samples: int, rng: np.random.Generator, noise=None) -> np.ndarray:
    """Loss of each (x_i, y_i); ``noise`` of shape [S, n, m] fixes the draws."""
    x, y = as_xy(data)
    if noise is not None:
        u = enc.sample(x, rng, mc_samples, noise=noise)
        return -dec.log_prob(u)[:, np.arange(len(y)), y].mean(axis=0)
    table = loss_table(enc, dec, x, mc_samples, rng).losses
    return table[np.arange(len(y)), y]


def empirical_risk(enc, dec, dataset, mc_samples: int, rng: np.random.Generator, noise=None) -> float:
    x, y = as_xy(dataset)
    if len(y) == 0:
        raise ConfigurationError("dataset is empty")
    return float(per_sample_losses(enc, dec, (x, y), mc_samples, rng, noise=noise).mean())


def quantile_higher(values, level: float) -> float:
    """Smallest order statistic whose rank is >= ceil(level * count)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ConfigurationError("no values to take a quantile of")
    if not 0.0 < level < 1.0:
        raise ConfigurationError("level must lie in (0, 1)")
    # guard against 0.95*20 = 19.000000000000004
    rank = math.ceil(round(level * v.size, 9))
    return float(v[max(rank, 1) - 1])


@dataclass
class GapEstimate:
    mini_test_gaps: list[float]
    quantile_level: float
    quantile_value: float
    reference_risk: float
    mini_test_risks: list[float] = field(default_factory=list)

    @property
    def n_mini_tests(self) -> int:
        return len(self.mini_test_gaps)


def gap_quantile_from_losses(
    reference_losses, pool_losses, mini_size: int = 100, level: float = 0.95, rng: np.random.Generator | None = None
) -> GapEstimate:
    """Gap quantile from per-sample losses.

    The pool is shuffled once (when ``rng`` is given) and cut into
    consecutive disjoint blocks of ``mini_size``; leftovers are dropped.
    """
    ref = np.asarray(reference_losses, dtype=np.float64)
    pool = np.asarray(pool_losses, dtype=np.float64)
    if ref.size == 0:
        raise ConfigurationError("reference set is empty")
    if mini_size < 1 or pool.size < mini_size:
        raise ConfigurationError(f"pool of {pool.size} samples cannot hold one mini-test of {mini_size}")
    order = rng.permutation(pool.size) if rng is not None else np.arange(pool.size)
    count = pool.size // mini_size
    blocks = pool[order[: count * mini_size]].reshape(count, mini_size)
    ref_risk = float(ref.mean())
    risks = blocks.mean(axis=1)
    gaps = np.abs(risks - ref_risk)
    return GapEstimate(gaps.tolist(), level, quantile_higher(gaps, level), ref_risk, risks.tolist())


def gap_quantile(
    enc,
    dec: SoftmaxDecoder,
    reference_set,
    pool,
    mini_size: int = 100,
    level: float = 0.95,
    mc_samples: int = 1024,
    rng: np.random.Generator | None = None,
) -> GapEstimate:
    rng = np.random.default_rng() if rng is None else rng
    _, pool_y = as_xy(pool)
    if len(pool_y) < mini_size:
        raise ConfigurationError(f"pool of {len(pool_y)} samples cannot hold one mini-test of {mini_size}")
    ref_losses = per_sample_losses(enc, dec, reference_set, mc_samples, rng)
    pool_losses = per_sample_losses(enc, dec, pool, mc_samples, rng)
    return gap_quantile_from_losses(ref_losses, pool_losses, mini_size, level, rng)


def estimate_eta(dec: SoftmaxDecoder, u_bank) -> float:
    """Smallest decoder probability over a probe bank of u, floored at 1e-12."""
    return max(float(decoder_prob(dec, np.atleast_2d(u_bank)).min()), PROB_FLOOR)
