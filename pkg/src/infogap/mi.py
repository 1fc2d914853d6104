"""Variational upper bound on I(X; U) from a factorized prior."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoders import kl_per_unit


@dataclass
class MiEstimate:
    per_unit_kl: np.ndarray  # nats
    total_kl: float
    sqrt_bound: float

    def to_dict(self) -> dict:
        return {
            "per_unit_kl": [float(v) for v in self.per_unit_kl],
            "total_kl": self.total_kl,
            "sqrt_bound": self.sqrt_bound,
        }

    def restrict(self, units) -> "MiEstimate":
        """Bound using only a subset of units."""
        return from_per_unit(np.asarray(self.per_unit_kl)[list(units)])


def from_per_unit(per_unit) -> MiEstimate:
    per_unit = np.maximum(np.asarray(per_unit, dtype=np.float64), 0.0)
    total = float(per_unit.sum())
    return MiEstimate(per_unit, total, math.sqrt(total))


def mi_bound(enc, dataset) -> MiEstimate:
    """sqrt(I(P_X; q_{U|X})) <= sqrt(sum_j KL(q_{U_j|X} || prior_j | P_X)).

    ``dataset`` plays the role of the empirical input law.
    """
    return from_per_unit(kl_per_unit(enc, dataset))
