"""Brute-force ground truth on small discrete worlds.

Everything here enumerates with plain loops over ``itertools.product`` and
``math`` so it shares no code path with the vectorised estimators it checks.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .bound import BoundReport, assemble_bound, delta_constants, hellinger
from .classifier import SoftmaxDecoder, decoder_prob, exact_loss_table
from .encoders import RBMEncoder, binary_states
from .errors import BudgetError, ConfigurationError
from .quantizer import Partition, quantized_model, sweep_k

MAX_X = 16
MAX_Y = 4
MAX_M = 3


@dataclass
class DiscreteWorld:
    x_support: np.ndarray  # [|X|, d]
    joint: np.ndarray  # [|X|, |Y|]
    encoder: RBMEncoder

    def __post_init__(self):
        self.x_support = np.asarray(self.x_support, dtype=np.float64)
        self.joint = np.asarray(self.joint, dtype=np.float64)
        if self.joint.shape[0] != self.x_support.shape[0]:
            raise ConfigurationError("joint rows must match the input support")
        if np.any(self.joint < 0) or abs(self.joint.sum() - 1.0) > 1e-12:
            raise ConfigurationError("joint must be a probability table")

    @property
    def x_card(self) -> int:
        return self.x_support.shape[0]

    @property
    def y_card(self) -> int:
        return self.joint.shape[1]

    @property
    def p_x(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def p_y(self) -> np.ndarray:
        return self.joint.sum(axis=0)


def random_world(seed: int, x_card: int = 8, y_card: int = 3, m: int = 3, d: int = 4, scale: float = 2.0) -> DiscreteWorld:
    if x_card > MAX_X or y_card > MAX_Y or m > MAX_M:
        raise BudgetError(f"world too large: |X|={x_card}, |Y|={y_card}, m={m}")
    rng = np.random.default_rng(seed)
    xs = rng.random((x_card, d))
    joint = rng.dirichlet(np.ones(x_card * y_card)).reshape(x_card, y_card)
    # keep every label and input on the support
    joint = 0.9 * joint + 0.1 / (x_card * y_card)
    joint /= joint.sum()
    enc = RBMEncoder(rng.normal(0, scale, (m, d)), rng.normal(0, 1, m), np.zeros(d))
    return DiscreteWorld(xs, joint, enc)


def random_decoder(seed: int, m: int, y_card: int, scale: float = 1.0) -> SoftmaxDecoder:
    rng = np.random.default_rng([seed, 7])
    return SoftmaxDecoder(rng.normal(0, scale, (y_card, m)), rng.normal(0, scale, y_card))


def _sig(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))


def enumerate_conditionals(enc: RBMEncoder, xs) -> list[dict]:
    """q(u|x) as {u-tuple: prob} for each input, by direct product of Bernoullis."""
    m = enc.weights.shape[0]
    if m > MAX_M + 7:
        raise BudgetError(f"m={m} too large for the oracle")
    out = []
    for x in np.asarray(xs, dtype=np.float64):
        acts = [_sig(float(enc.hidden_bias[j]) + sum(float(w) * float(v) for w, v in zip(enc.weights[j], x))) for j in range(m)]
        table = {}
        for u in itertools.product((0, 1), repeat=m):
            prob = 1.0
            for a, bit in zip(acts, u):
                prob *= a if bit else 1.0 - a
            table[u] = prob
        out.append(table)
    return out


def mi_enumerated(enc: RBMEncoder, xs, px) -> float:
    """I(P_X; q_{U|X}) = sum_x sum_u P(x) q(u|x) log(q(u|x) / q(u))."""
    conds = enumerate_conditionals(enc, xs)
    marg: dict = {}
    for p, table in zip(px, conds):
        for u, q in table.items():
            marg[u] = marg.get(u, 0.0) + p * q
    terms = []
    for p, table in zip(px, conds):
        for u, q in table.items():
            if p > 0 and q > 0:
                terms.append(p * q * math.log(q / marg[u]))
    return max(math.fsum(terms), 0.0)


def mi_via_entropies(enc: RBMEncoder, xs, px) -> float:
    """Second, independently coded enumeration: H(U) - H(U|X)."""
    conds = enumerate_conditionals(enc, xs)
    keys = list(conds[0].keys())
    q_u = [math.fsum(p * c[u] for p, c in zip(px, conds)) for u in keys]
    h_u = -math.fsum(q * math.log(q) for q in q_u if q > 0)
    h_u_x = -math.fsum(p * c[u] * math.log(c[u]) for p, c in zip(px, conds) for u in keys if c[u] > 0 and p > 0)
    return h_u - h_u_x


def brute_force_mi(world: DiscreteWorld) -> float:
    """Exact mutual information between X ~ P_X and U ~ q(.|X), in nats."""
    return mi_enumerated(world.encoder, world.x_support, world.p_x)


def brute_force_mi_empirical(enc: RBMEncoder, xs) -> float:
    """Mutual information under the empirical law of the rows of ``xs``."""
    xs = np.asarray(xs, dtype=np.float64)
    return mi_enumerated(enc, xs, np.full(xs.shape[0], 1.0 / xs.shape[0]))


def exact_loss_oracle(enc: RBMEncoder, dec: SoftmaxDecoder, x, y: int) -> float:
    """sum_u q(u|x) * -log Q(y|u) by explicit enumeration."""
    table = enumerate_conditionals(enc, [x])[0]
    total = []
    for u, q in table.items():
        logits = [float(dec.biases[c]) + sum(float(w) * b for w, b in zip(dec.weights[c], u)) for c in range(dec.weights.shape[0])]
        mx = max(logits)
        lse = mx + math.log(math.fsum(math.exp(v - mx) for v in logits))
        total.append(q * (lse - logits[int(y)]))
    return math.fsum(total)


@dataclass
class CoverageResult:
    coverage: float
    bound: float
    gaps: np.ndarray
    expected_risk: float
    report: BoundReport | None = None
    trials: int = 0
    extras: dict = field(default_factory=dict)


def world_bound(world: DiscreteWorld, dec: SoftmaxDecoder, n: int, delta: float, k_grid=None,
                rng: np.random.Generator | None = None) -> BoundReport:
    """Assemble every evaluated term of the gap bound for a discrete world."""
    rng = np.random.default_rng(0) if rng is None else rng
    enc = world.encoder
    losses = exact_loss_table(enc, dec, world.x_support)  # [|X|, |Y|]
    k_grid = list(range(1, world.x_card + 1)) if k_grid is None else k_grid
    mi = brute_force_mi(world)
    consts = delta_constants(delta, world.y_card, float(world.p_y.min()), _eta(dec, enc.m), log_vol_u=enc.m * math.log(2.0))
    mi_coef = consts.a_delta * math.sqrt(mi) * math.log(n) / math.sqrt(n)
    sweep = sweep_k(losses, k_grid, mi_coef, rng=rng, weights=world.p_x)

    # expand to (x, y) pair rows so each row carries its joint mass
    part = sweep.partitions[sweep.best.requested_k]
    xi, yi = np.meshgrid(np.arange(world.x_card), np.arange(world.y_card), indexing="ij")
    xi, yi = xi.ravel(), yi.ravel()
    pair_part = Partition(part.k, part.assignment[xi], part.loss_centroids, np.bincount(part.assignment[xi], minlength=part.k))
    qm = quantized_model(pair_part, enc, (world.x_support[xi], yi), losses[xi], "exact",
                         n_labels=world.y_card, weights=world.joint.ravel())
    dec_table = decoder_prob(dec, qm.u_states)
    hl = hellinger(dec_table, qm.decoder_d, qm.u_weights)
    return assemble_bound(mi, sweep.reports, hl, consts, n)


def _eta(dec: SoftmaxDecoder, m: int) -> float:
    return float(decoder_prob(dec, binary_states(m)).min())


def exact_gap_distribution(
    world: DiscreteWorld,
    decoder: SoftmaxDecoder,
    n: int,
    trials: int,
    delta: float,
    rng: np.random.Generator,
    bound: float | None = None,
) -> CoverageResult:
    """Fraction of sampled datasets S_n whose exact gap is within the bound."""
    losses = exact_loss_table(world.encoder, decoder, world.x_support)
    flat_p = world.joint.ravel()
    flat_l = losses.ravel()
    risk = float(flat_p @ flat_l)
    report = None
    if bound is None:
        report = world_bound(world, decoder, n, delta, rng=rng)
        bound = report.total
    counts = rng.multinomial(n, flat_p, size=trials)
    gaps = np.abs(counts @ flat_l / n - risk)
    return CoverageResult(float(np.mean(gaps <= bound)), float(bound), gaps, risk, report, trials)


# committed instance seeds for deterministic verification
WORLD_SEEDS = tuple(range(100))
COVERAGE_WORLD_SEED = 3


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def world_sample(world: DiscreteWorld, size: int, rng: np.random.Generator) -> np.ndarray:
    """Rows drawn i.i.d. from P_X; their empirical law is the one both MI sides use."""
    idx = rng.choice(world.x_card, size=size, p=world.p_x)
    return world.x_support[idx]


def check_mi_dominance(seeds=WORLD_SEEDS, sample_size: int = 200) -> PropertyResult:
    from .mi import mi_bound

    worst = math.inf
    for s in seeds:
        rng = np.random.default_rng([s, 11])
        world = random_world(s, x_card=int(rng.integers(2, 9)), m=int(rng.integers(1, 4)))
        xs = world_sample(world, sample_size, rng)
        slack = mi_bound(world.encoder, xs).total_kl - brute_force_mi_empirical(world.encoder, xs)
        worst = min(worst, slack)
    return PropertyResult("mi_dominance", worst >= -1e-9, f"min(mi_bound^2 - MI) = {worst:.3e} over {len(seeds)} worlds")


def check_mi_dual(seeds=WORLD_SEEDS[:20]) -> PropertyResult:
    worst = 0.0
    nonneg = True
    for s in seeds:
        world = random_world(s)
        a = brute_force_mi(world)
        b = mi_via_entropies(world.encoder, world.x_support, world.p_x)
        worst = max(worst, abs(a - b))
        nonneg &= a >= 0
    return PropertyResult("mi_dual_enumeration", worst <= 1e-10 and nonneg, f"max |diff| = {worst:.3e}")


def check_exact_loss(seeds=WORLD_SEEDS[:20]) -> PropertyResult:
    from .classifier import exact_loss_binary

    worst = 0.0
    for s in seeds:
        world = random_world(s)
        dec = random_decoder(s, world.encoder.m, world.y_card)
        for x in world.x_support:
            for y in range(world.y_card):
                worst = max(worst, abs(exact_loss_binary(world.encoder, dec, x, y) - exact_loss_oracle(world.encoder, dec, x, y)))
    return PropertyResult("exact_loss_enumeration", worst <= 1e-10, f"max |diff| = {worst:.3e}")


def check_coverage(n: int = 1000, delta: float = 0.05, trials: int = 1000, seed: int = 0) -> PropertyResult:
    world = random_world(COVERAGE_WORLD_SEED)
    dec = random_decoder(COVERAGE_WORLD_SEED, world.encoder.m, world.y_card)
    res = exact_gap_distribution(world, dec, n, trials, delta, np.random.default_rng(seed))
    return PropertyResult("bound_coverage", res.coverage >= 1.0 - delta,
                          f"coverage {res.coverage:.4f} (bound {res.bound:.4f}, max gap {res.gaps.max():.4f})")


def verify_suite() -> list[PropertyResult]:
    return [check_mi_dual(), check_mi_dominance(), check_exact_loss(), check_coverage()]
