"""Terms of the high-probability testing-gap bound and the concentration inequalities behind it.

All logarithms are natural. The O(log n / n) remainder has no stated constant
and is never evaluated; reports carry a note instead.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, ValidationError
from .mi import MiEstimate

E_INV = math.exp(-1.0)
REMAINDER_NOTE = "O(log(n)/n) remainder not evaluated"


def phi(x: float) -> float:
    """0 for x <= 0, -x log x on (0, 1/e), 1/e beyond."""
    if x <= 0:
        return 0.0
    if x < E_INV:
        return -x * math.log(x)
    return E_INV


def phi_growth_bound(a: float, n: int) -> float:
    """Upper bound on phi(a / sqrt(n)), valid once n >= a^2 e^2."""
    if n < 1 or n < a * a * math.e**2:
        raise DomainError(f"need n >= a^2 e^2 (a={a}, n={n})")
    return 0.5 * a * math.log(n) / math.sqrt(n) + E_INV / math.sqrt(n)


def _check_rows(table: np.ndarray, name: str) -> None:
    if np.any(table < -1e-12):
        raise ValidationError(f"{name} has negative entries")
    err = np.abs(table.sum(axis=1) - 1.0).max() if table.size else 0.0
    if err > 1e-9:
        raise ValidationError(f"{name} rows are not normalized (max error {err:.3g})")


def hellinger(p_table, q_table, u_weights) -> float:
    """sqrt(0.5 * E_u[ sum_y (sqrt p(y|u) - sqrt q(y|u))^2 ]) with E over ``u_weights``."""
    p = np.atleast_2d(np.asarray(p_table, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q_table, dtype=np.float64))
    w = np.asarray(u_weights, dtype=np.float64).reshape(-1)
    if p.shape != q.shape or p.shape[0] != w.size:
        raise ValidationError(f"table shapes {p.shape}, {q.shape} and weights {w.shape} disagree")
    _check_rows(p, "first table")
    _check_rows(q, "second table")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValidationError("u_weights must be a probability vector")
    per_u = np.sum((np.sqrt(np.clip(p, 0, None)) - np.sqrt(np.clip(q, 0, None))) ** 2, axis=1)
    return float(min(math.sqrt(max(0.5 * float(w @ per_u), 0.0)), 1.0))


def hellinger_mc(p_table, q_table) -> tuple[float, float]:
    """Hellinger distance with u drawn as a Monte Carlo bank; returns (value, standard error)."""
    p = np.atleast_2d(np.asarray(p_table, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q_table, dtype=np.float64))
    b = p.shape[0]
    value = hellinger(p, q, np.full(b, 1.0 / b))
    per_u = 0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2, axis=1)
    se_sq = per_u.std(ddof=1) / math.sqrt(b) if b > 1 else 0.0
    # delta method for the square root; falls back to sqrt(se) near zero
    se = se_sq / (2 * value) if value > 0 else math.sqrt(se_sq)
    return value, float(se)


def var_bound_t(hellinger_value: float, eta: float) -> float:
    """Variance bound 8 / sqrt(eta) * D_HL^2."""
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"eta must lie in (0, 1], got {eta}")
    if not 0.0 <= hellinger_value <= 1.0:
        raise DomainError(f"Hellinger distance must lie in [0, 1], got {hellinger_value}")
    return 8.0 / math.sqrt(eta) * hellinger_value**2


def _check_n_delta(n: int, delta: float, closed: bool = False) -> None:
    if n < 1:
        raise DomainError("n must be >= 1")
    ok = 0.0 < delta <= 1.0 if closed else 0.0 < delta < 1.0
    if not ok:
        raise DomainError(f"delta out of range: {delta}")


def kl_concentration(x_card: int, y_card: int, n: int, delta: float) -> float:
    """|X||Y| log(n+1)/n + log((|Y|+4)/delta)/n."""
    _check_n_delta(n, delta)
    return x_card * y_card * math.log(n + 1) / n + math.log((y_card + 4) / delta) / n


def l2_concentration(n: int, delta: float) -> float:
    """(1 + sqrt(log(1/delta))) / sqrt(n), the McDiarmid bound on ||P - P_hat||_2."""
    _check_n_delta(n, delta, closed=True)
    return (1.0 + math.sqrt(math.log(1.0 / delta))) / math.sqrt(n)


def chebyshev_d(var_bound: float, n: int, delta: float, y_card: int) -> float:
    """sqrt((|Y|+4) / (n delta)) * sqrt(Var)."""
    _check_n_delta(n, delta)
    if var_bound < 0:
        raise DomainError("variance bound must be >= 0")
    return math.sqrt((y_card + 4) / (n * delta)) * math.sqrt(var_bound)


@dataclass(frozen=True)
class DeltaConstants:
    delta: float
    y_card: int
    b_delta: float
    a_delta: float
    c_delta: float
    d_delta: float
    vol_u: float
    p_y_min: float
    eta: float
    log_vol_u: float

    def to_dict(self) -> dict:
        return asdict(self)


def delta_constants(
    delta: float, y_card: int, p_y_min: float, eta: float, vol_u: float | None = None, log_vol_u: float | None = None
) -> DeltaConstants:
    """A, B, C, D constants. Vol(U) may be passed as a log to avoid overflow (e.g. 2^m)."""
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    if not 0.0 < p_y_min <= 1.0:
        raise DomainError("P_Y(y_min) must lie in (0, 1]")
    if not 0.0 < eta < 1.0:
        raise DomainError("eta must lie in (0, 1)")
    if log_vol_u is None:
        if vol_u is None or vol_u <= 0:
            raise DomainError("Vol(U) must be > 0")
        log_vol_u = math.log(vol_u)
    if vol_u is None:
        vol_u = math.exp(log_vol_u) if log_vol_u < 709 else math.inf
    b = 1.0 + math.sqrt(math.log((y_card + 4) / delta))
    a = math.sqrt(2.0) * b
    vol_term = 2.0 * math.exp(log_vol_u - 1.0) if log_vol_u < 709 else math.inf
    c = vol_term + b * math.sqrt(y_card) * (log_vol_u - math.log(p_y_min))
    d = eta**-0.25 * math.sqrt(8.0 * (y_card + 4) / delta)
    return DeltaConstants(delta, y_card, b, a, c, d, vol_u, p_y_min, eta, log_vol_u)


@dataclass
class BoundReport:
    mi_term: float
    hellinger_term: float
    constant_term: float
    quantization_term: float
    total: float
    chosen_k: int
    n: int
    delta: float
    epsilon_hat: float = 0.0
    r_hat: float = 1.0
    mi_sqrt: float = 0.0
    hellinger: float = 0.0
    remainder_note: str = REMAINDER_NOTE
    objective_by_k: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["objective_by_k"] = {str(k): v for k, v in self.objective_by_k.items()}
        return doc

    CSV_FIELDS = (
        "n", "delta", "chosen_k", "epsilon_hat", "r_hat", "mi_sqrt", "hellinger",
        "quantization_term", "mi_term", "hellinger_term", "constant_term", "total",
    )

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def assemble_bound(
    mi_estimate: MiEstimate | float, quant_reports: Sequence, hellinger_value: float, constants: DeltaConstants, n: int
) -> BoundReport:
    """min_K [2 eps(K) + A sqrt(MI) log(n)/sqrt(n) r(K)] + (D * D_HL + C) / sqrt(n).

    The minimum is over the supplied grid only.
    """
    if not quant_reports:
        raise ConfigurationError("need at least one quantization report")
    if n < 2:
        raise DomainError("n must be >= 2")
    mi_sqrt = mi_estimate.sqrt_bound if isinstance(mi_estimate, MiEstimate) else math.sqrt(float(mi_estimate))
    rate = math.log(n) / math.sqrt(n)
    mi_coef = constants.a_delta * mi_sqrt * rate
    objective = {}
    best = None
    for rep in quant_reports:
        val = 2.0 * rep.epsilon_hat + mi_coef * rep.r_hat
        objective[rep.requested_k or rep.k] = val
        if best is None or val < best[0]:
            best = (val, rep)
    _, rep = best
    hl_term = constants.d_delta * hellinger_value / math.sqrt(n)
    c_term = constants.c_delta / math.sqrt(n)
    q_term = 2.0 * rep.epsilon_hat
    m_term = mi_coef * rep.r_hat
    return BoundReport(
        mi_term=m_term,
        hellinger_term=hl_term,
        constant_term=c_term,
        quantization_term=q_term,
        total=q_term + m_term + hl_term + c_term,
        chosen_k=rep.k,
        n=n,
        delta=constants.delta,
        epsilon_hat=rep.epsilon_hat,
        r_hat=rep.r_hat,
        mi_sqrt=mi_sqrt,
        hellinger=hellinger_value,
        objective_by_k=objective,
        constants=constants.to_dict(),
    )
