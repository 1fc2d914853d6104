"""Loss-space partitions (coloring / centroid iteration) and the quantized model.

Samples are clustered by their loss rows ``l(x_i, .)`` under the max-abs
metric. Cells are shared across labels and each cell keeps one loss centroid
per label.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .encoders import ENUMERATION_LIMIT, RBMEncoder, as_inputs, binary_states
from .errors import BudgetError, ConfigurationError


@dataclass
class Partition:
    k: int
    assignment: np.ndarray  # [n] cell index per sample
    loss_centroids: np.ndarray  # [k, |Y|]
    cell_counts: np.ndarray  # [k]
    requested_k: int = 0
    iterations: int = 0
    converged: bool = False


@dataclass
class QuantizationReport:
    k: int
    epsilon_hat: float
    r_hat: float
    objective: float | None = None
    requested_k: int = 0

    CSV_FIELDS = ("K", "epsilon_hat", "r_hat", "objective")

    def csv_row(self) -> dict:
        return {"K": self.requested_k or self.k, "epsilon_hat": self.epsilon_hat, "r_hat": self.r_hat, "objective": self.objective}


def _check_table(loss_table) -> np.ndarray:
    t = np.asarray(loss_table, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] == 0:
        raise ConfigurationError(f"loss table must be a non-empty [n, |Y|] matrix, got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ConfigurationError("loss table must be finite")
    return t


def _seed_centroids(t: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding with squared max-abs distances."""
    n = t.shape[0]
    chosen = [int(rng.integers(n))]
    dist = np.max(np.abs(t - t[chosen[0]]), axis=1)
    for _ in range(1, k):
        w = dist**2
        total = w.sum()
        # all remaining rows coincide with a chosen centroid
        idx = int(rng.integers(n)) if total <= 0 else int(rng.choice(n, p=w / total))
        chosen.append(idx)
        dist = np.minimum(dist, np.max(np.abs(t - t[idx]), axis=1))
    return t[chosen].copy()


def _centroids(t: np.ndarray, assign: np.ndarray, k: int):
    counts = np.bincount(assign, minlength=k)
    sums = np.zeros((k, t.shape[1]))
    np.add.at(sums, assign, t)
    with np.errstate(invalid="ignore", divide="ignore"):
        cent = sums / counts[:, None]
    return cent, counts


def _finalize(t: np.ndarray, assign: np.ndarray, k: int, requested: int, iters: int, converged: bool) -> Partition:
    counts = np.bincount(assign, minlength=k)
    keep = np.flatnonzero(counts > 0)
    remap = np.full(k, -1)
    remap[keep] = np.arange(keep.size)
    assign = remap[assign]
    cent, counts = _centroids(t, assign, keep.size)
    return Partition(keep.size, assign, cent, counts, requested, iters, converged)


def _max_dev(t: np.ndarray, assign: np.ndarray, cent: np.ndarray) -> float:
    return float(np.max(np.abs(t - cent[assign])))


def loss_kmeans(loss_table, k: int, max_iters: int = 100, rng: np.random.Generator | None = None, n_init: int = 4) -> Partition:
    """Alternate coloring (argmin_k max_y |l(x_i,y) - c_k,y|) and cell-mean centroids.

    Empty cells are re-seeded from the worst-fitting sample. The best partition
    seen (smallest max deviation) across iterations and ``n_init`` seedings is
    returned, with empty cells pruned and centroids equal to cell means.
    """
    t = _check_table(loss_table)
    n = t.shape[0]
    if not 1 <= k <= n:
        raise ConfigurationError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(0) if rng is None else rng
    best: tuple[float, Partition] | None = None
    for _ in range(max(n_init, 1)):
        cent = _seed_centroids(t, k, rng)
        assign = None
        converged = False
        it = 0
        for it in range(1, max_iters + 1):
            new_assign, dist = kernels.chebyshev_assign(t, cent)
            counts = np.bincount(new_assign, minlength=k)
            for empty in np.flatnonzero(counts == 0):
                worst = int(np.argmax(dist))
                if dist[worst] <= 0:
                    break
                new_assign[worst] = empty
                dist[worst] = 0.0
                cent[empty] = t[worst]
            if assign is not None and np.array_equal(new_assign, assign):
                converged = True
                break
            assign = new_assign
            fresh, counts = _centroids(t, assign, k)
            cent = np.where(counts[:, None] > 0, fresh, cent)
            part = _finalize(t, assign, k, k, it, False)
            score = _max_dev(t, part.assignment, part.loss_centroids)
            if best is None or score < best[0]:
                best = (score, part)
        part = _finalize(t, assign, k, k, it, converged)
        score = _max_dev(t, part.assignment, part.loss_centroids)
        if best is None or score < best[0] or (score == best[0] and converged):
            best = (score, part)
    return best[1]


def epsilon_r_hat(partition: Partition, loss_table, weights=None) -> QuantizationReport:
    """Sample-max loss deviation and inverse minimum cell mass.

    ``weights`` (default uniform) gives the probability mass of each row.
    """
    t = _check_table(loss_table)
    if partition.assignment.shape[0] != t.shape[0]:
        raise ConfigurationError("partition does not cover the loss table")
    eps = _max_dev(t, partition.assignment, partition.loss_centroids)
    if weights is None:
        mass = partition.cell_counts / t.shape[0]
    else:
        w = np.asarray(weights, dtype=np.float64)
        mass = np.bincount(partition.assignment, weights=w / w.sum(), minlength=partition.k)
    return QuantizationReport(partition.k, eps, float(1.0 / mass.min()), None, partition.requested_k or partition.k)


@dataclass
class SweepResult:
    reports: list[QuantizationReport]
    best: QuantizationReport
    partitions: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=QuantizationReport.CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for rep in self.reports:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rep.csv_row().items()})
        return buf.getvalue()


def sweep_k(loss_table, k_grid: Sequence[int], mi_term: float, rng: np.random.Generator | None = None, weights=None,
            max_iters: int = 100) -> SweepResult:
    """Objective 2*eps(K) + mi_term * r(K) for each K; ties go to the larger K."""
    if not k_grid:
        raise ConfigurationError("k_grid must be non-empty")
    t = _check_table(loss_table)
    rng = np.random.default_rng(0) if rng is None else rng
    reports, partitions = [], {}
    for k in sorted(set(int(v) for v in k_grid)):
        if k > t.shape[0]:
            continue
        part = loss_kmeans(t, k, max_iters=max_iters, rng=rng)
        rep = epsilon_r_hat(part, t, weights)
        rep.objective = 2.0 * rep.epsilon_hat + mi_term * rep.r_hat
        reports.append(rep)
        partitions[k] = part
    if not reports:
        raise ConfigurationError("every K in the grid exceeds the number of samples")
    best = min(reports, key=lambda r: (r.objective, -r.requested_k))
    return SweepResult(reports, best, partitions)


@dataclass
class QuantizedModel:
    joint: np.ndarray  # [K, |Y|] masses P^D(k, y)
    u_states: np.ndarray  # [B, m] enumerated states (exact) or Monte Carlo bank
    u_weights: np.ndarray  # [B] q_U^D(u) (exact) or uniform 1/B (bank)
    decoder_d: np.ndarray  # [B, |Y|] Q^D(y|u)
    representatives: np.ndarray  # [K] sample index of each cell's medoid
    mode: str
    bank_size: int = 0


def cell_representatives(partition: Partition, loss_table) -> np.ndarray:
    """Index of the member whose loss row is closest (max-abs) to its cell centroid."""
    t = _check_table(loss_table)
    d = np.max(np.abs(t - partition.loss_centroids[partition.assignment]), axis=1)
    reps = np.empty(partition.k, dtype=np.int64)
    for k in range(partition.k):
        members = np.flatnonzero(partition.assignment == k)
        reps[k] = members[np.argmin(d[members])]
    return reps


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    mx = np.max(a, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):  # an all -inf slice is a legitimate log(0)
        return np.squeeze(mx, axis=axis) + np.log(np.sum(np.exp(a - mx), axis=axis))


def quantized_model(
    partition: Partition,
    enc,
    dataset,
    loss_table,
    u_mode: str = "exact",
    rng: np.random.Generator | None = None,
    n_labels: int | None = None,
    weights=None,
    bank_size: int = 10_000,
) -> QuantizedModel:
    """Quantized joint P^D(k, y), marginal q_U^D and decoder Q^D(y|u).

    ``dataset`` is ``(inputs, labels)`` or a dataset object aligned with the
    partition rows; ``weights`` are optional per-row masses.
    """
    from .classifier import as_xy

    x, y = as_xy(dataset)
    if x.shape[0] != partition.assignment.shape[0]:
        raise ConfigurationError("dataset rows do not match the partition")
    n_labels = int(y.max()) + 1 if n_labels is None else n_labels
    w = np.full(len(y), 1.0 / len(y)) if weights is None else np.asarray(weights, dtype=np.float64) / np.sum(weights)
    joint = np.zeros((partition.k, n_labels))
    np.add.at(joint, (partition.assignment, y), w)
    reps = cell_representatives(partition, loss_table)
    x_rep = x[reps]
    p_cell = joint.sum(axis=1)

    if u_mode == "exact":
        if not isinstance(enc, RBMEncoder):
            raise ConfigurationError("exact mode needs a binary (RBM) encoder")
        if enc.m > ENUMERATION_LIMIT:
            raise BudgetError(f"exact mode limited to m <= {ENUMERATION_LIMIT}")
        q = enc.state_probs(x_rep)  # [K, 2^m]
        states = binary_states(enc.m)
        q_u = p_cell @ q
        num = q.T @ joint  # [2^m, |Y|]
        with np.errstate(invalid="ignore", divide="ignore"):
            dec = np.where(q_u[:, None] > 0, num / q_u[:, None], 1.0 / n_labels)
        return QuantizedModel(joint, states, q_u, dec, reps, "exact")

    if u_mode != "monte_carlo":
        raise ConfigurationError(f"unknown u_mode {u_mode!r}")
    rng = np.random.default_rng(0) if rng is None else rng
    cells = rng.choice(partition.k, size=bank_size, p=p_cell / p_cell.sum())
    bank = np.empty((bank_size, enc.m))
    for k in np.unique(cells):
        sel = np.flatnonzero(cells == k)
        bank[sel] = enc.sample(x_rep[k:k + 1], rng, sel.size)[:, 0, :]
    logq = enc.log_density(x_rep, bank)  # [K, B]
    with np.errstate(divide="ignore"):
        log_joint = np.log(joint)
    # log sum_k q(u|x_k) P^D(k, y) for each y, then normalize over y
    log_num = _logsumexp(logq[:, :, None] + log_joint[:, None, :], axis=0)  # [B, |Y|]
    log_den = _logsumexp(log_num, axis=1)
    dec = np.exp(log_num - log_den[:, None])
    return QuantizedModel(joint, bank, np.full(bank_size, 1.0 / bank_size), dec, reps, "monte_carlo", bank_size)
