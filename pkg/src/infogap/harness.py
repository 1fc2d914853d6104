"""End-to-end lambda sweep: train, estimate MI and gap quantile, assemble the bound."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .bound import BoundReport, assemble_bound, delta_constants, hellinger_mc, hellinger
from .classifier import SoftmaxDecoder, as_xy, decoder_prob, gap_quantile_from_losses, loss_table
from .data import LabeledDataset, PerturbSpec, load_idx, mnist_subset, perturb, subsample
from .encoders import ENUMERATION_LIMIT, RBMEncoder, encoder_from_dict, encoder_to_dict
from .errors import ConfigurationError, InfogapError, NumericError
from .mi import MiEstimate, mi_bound
from .nn import TrainConfig
from .quantizer import quantized_model, sweep_k
from .training import TrainSpec, train_model

VARIANTS = ("clean", "perturbed")
DEFAULT_LAMBDAS = {
    "gaussian": [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
    "lognormal": [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
    "rbm": [1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
}


@dataclass
class ExperimentConfig:
    encoder_family: str = "gaussian"
    lambda_grid: list = field(default_factory=lambda: list(DEFAULT_LAMBDAS["gaussian"]))
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    train_size: int = 2000
    reference_size: int = 1000
    mini_test_size: int = 100
    quantile_level: float = 0.95
    delta: float = 0.05
    test_variants: list = field(default_factory=lambda: list(VARIANTS))
    k_grid: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32, 64])
    mc_samples: int = 1024
    train_mc_samples: int = 64
    hidden: int = 128
    m: int = 64
    epochs: int = 50
    learning_rate: float = 0.2
    # plain SGD on the KL term oscillates once lr * lam exceeds ~2; the step is
    # capped at kl_step_cap / lam (None disables the cap)
    kl_step_cap: float | None = 1.0
    batch_size: int = 100
    momentum: float = 0.0
    final_momentum: float | None = None
    decoder_epochs: int = 100
    decoder_learning_rate: float = 0.1
    hellinger_bank: int = 10_000
    perturb_seed: int = 12345
    max_translation: int = 5
    angle_range: float = math.pi / 4
    perturb_order: str = "rotate_then_translate"
    image_path: str | None = None
    label_path: str | None = None
    output_dir: str = "runs"
    max_pool: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.encoder_family not in DEFAULT_LAMBDAS:
            raise ConfigurationError(f"unknown encoder family {self.encoder_family!r}")
        if not self.lambda_grid or any(v < 0 for v in self.lambda_grid):
            raise ConfigurationError("lambda_grid must be non-empty and non-negative")
        if list(self.lambda_grid) != sorted(self.lambda_grid):
            raise ConfigurationError("lambda_grid must be sorted ascending")
        if not self.seeds:
            raise ConfigurationError("need at least one seed")
        if abs(self.quantile_level - (1.0 - self.delta)) > 1e-12:
            raise ConfigurationError("quantile_level must equal 1 - delta")
        if not set(self.test_variants) <= set(VARIANTS) or not self.test_variants:
            raise ConfigurationError(f"test_variants must be drawn from {VARIANTS}")
        if not self.k_grid:
            raise ConfigurationError("k_grid must be non-empty")
        if self.kl_step_cap is not None and self.kl_step_cap <= 0:
            raise ConfigurationError("kl_step_cap must be positive or None")

    @classmethod
    def paper_scale(cls, family: str = "gaussian", **kw) -> "ExperimentConfig":
        """Sizes used in the original experiments (train 5000, wide layers, 200 epochs)."""
        base = dict(
            encoder_family=family,
            lambda_grid=list(DEFAULT_LAMBDAS[family]),
            train_size=5000,
            reference_size=5000,
            hidden=512 if family == "gaussian" else 256,
            m=256,
            epochs=200,
            learning_rate=0.001,
            decoder_epochs=500,
        )
        if family == "rbm":
            base.update(learning_rate=0.1, momentum=0.5, final_momentum=0.9)
        base.update(kw)
        return cls(**base)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known - {"paper_scale"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        if doc.pop("paper_scale", False):
            return cls.paper_scale(doc.pop("encoder_family", "gaussian"), **doc)
        if "encoder_family" in doc and "lambda_grid" not in doc:
            doc["lambda_grid"] = list(DEFAULT_LAMBDAS.get(doc["encoder_family"], DEFAULT_LAMBDAS["gaussian"]))
        if doc.get("encoder_family") == "rbm":
            doc.setdefault("learning_rate", 0.1)
            doc.setdefault("momentum", 0.5)
            doc.setdefault("final_momentum", 0.9)
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def train_spec(self, lam: float, seed: int) -> TrainSpec:
        lr = self.learning_rate
        if self.kl_step_cap is not None and lam > 0:
            lr = min(lr, self.kl_step_cap / lam)
        train = TrainConfig(
            learning_rate=lr,
            batch_size=self.batch_size,
            epochs=self.epochs,
            momentum=self.momentum,
            lam=lam,
            rng_seed=seed,
            final_momentum=self.final_momentum,
        )
        dec = None
        if self.encoder_family == "rbm":
            dec = TrainConfig(
                learning_rate=self.decoder_learning_rate,
                batch_size=self.batch_size,
                epochs=self.decoder_epochs,
                momentum=self.momentum,
                final_momentum=self.final_momentum,
                rng_seed=seed,
            )
        return TrainSpec(self.encoder_family, self.hidden, self.m, train, self.train_mc_samples, dec)

    def perturb_spec(self) -> PerturbSpec:
        return PerturbSpec(self.max_translation, self.angle_range, self.perturb_seed, self.perturb_order)


@dataclass
class SplitBook:
    train: np.ndarray
    reference: np.ndarray
    pool: np.ndarray

    def check_disjoint(self) -> None:
        a, b, c = set(self.train.tolist()), set(self.reference.tolist()), set(self.pool.tolist())
        if a & b or a & c or b & c:
            raise ConfigurationError("train, reference and pool index sets overlap")


def split_data(data: LabeledDataset, cfg: ExperimentConfig, seed: int):
    """Disjoint train / reference / pool split for one seed."""
    need = cfg.train_size + cfg.reference_size + cfg.mini_test_size
    if len(data) < need:
        raise ConfigurationError(f"dataset of {len(data)} too small for train+reference+one mini-test ({need})")
    train, rest = subsample(data, cfg.train_size, seed)
    reference, pool = subsample(rest, cfg.reference_size, seed + 1_000_003)
    if cfg.max_pool is not None and len(pool) > cfg.max_pool:
        pool, _ = subsample(pool, cfg.max_pool, seed + 2_000_003)
    book = SplitBook(train.indices, reference.indices, pool.indices)
    book.check_disjoint()
    return train, reference, pool, book


@dataclass
class Record:
    lam: float
    seed: int
    variant: str
    status: str = "ok"
    error: str = ""
    mi: MiEstimate | None = None
    gap: object = None
    bound: BoundReport | None = None
    loss_curve: list = field(default_factory=list)
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    RUN_FIELDS = (
        "lambda", "seed", "variant", "status", "mi_sqrt_bound", "mi_total_kl", "gap_quantile",
        "reference_risk", "n_mini_tests", "bound_total", "chosen_k",
    )

    def row(self) -> dict:
        ok = self.status == "ok"
        return {
            "lambda": self.lam,
            "seed": self.seed,
            "variant": self.variant,
            "status": self.status,
            "mi_sqrt_bound": self.mi.sqrt_bound if ok else math.nan,
            "mi_total_kl": self.mi.total_kl if ok else math.nan,
            "gap_quantile": self.gap.quantile_value if ok else math.nan,
            "reference_risk": self.gap.reference_risk if ok else math.nan,
            "n_mini_tests": self.gap.n_mini_tests if ok else 0,
            "bound_total": self.bound.total if ok else math.nan,
            "chosen_k": self.bound.chosen_k if ok else 0,
        }

    def to_dict(self) -> dict:
        doc = self.row()
        doc.update(
            error=self.error,
            wall_time=self.wall_time,
            loss_curve=self.loss_curve,
            mi=self.mi.to_dict() if self.mi else None,
            gap=asdict(self.gap) if self.gap else None,
            bound=self.bound.to_dict() if self.bound else None,
            extras=self.extras,
        )
        return doc


@dataclass
class RunArtifact:
    config: ExperimentConfig
    records: list = field(default_factory=list)

    AGG_FIELDS = (
        "lambda", "variant", "n_seeds", "mi_sqrt_bound", "gap_quantile", "bound_total",
        "mi_sqrt_bound_norm", "gap_quantile_norm",
    )

    def aggregates(self) -> list[dict]:
        """Seed means per (lambda, variant) plus min-max normalised series per variant."""
        rows = []
        for variant in self.config.test_variants:
            for lam in self.config.lambda_grid:
                recs = [r for r in self.records if r.variant == variant and r.lam == lam and r.status == "ok"]
                if not recs:
                    continue
                rows.append({
                    "lambda": lam,
                    "variant": variant,
                    "n_seeds": len(recs),
                    "mi_sqrt_bound": float(np.mean([r.mi.sqrt_bound for r in recs])),
                    "gap_quantile": float(np.mean([r.gap.quantile_value for r in recs])),
                    "bound_total": float(np.mean([r.bound.total for r in recs])),
                })
        for variant in self.config.test_variants:
            sub = [r for r in rows if r["variant"] == variant]
            for key in ("mi_sqrt_bound", "gap_quantile"):
                vals = [r[key] for r in sub]
                lo, hi = (min(vals), max(vals)) if vals else (0.0, 0.0)
                for r in sub:
                    r[key + "_norm"] = (r[key] - lo) / (hi - lo) if hi > lo else 0.0
        return rows


def load_dataset(cfg: ExperimentConfig) -> LabeledDataset:
    if cfg.image_path and cfg.label_path:
        return load_idx(cfg.image_path, cfg.label_path)
    return mnist_subset()


def _volume_log(low, high) -> float:
    span = np.maximum(np.asarray(high) - np.asarray(low), 1e-300)
    return float(np.sum(np.log(span)))


def evaluate_variant(enc, dec: SoftmaxDecoder, reference: LabeledDataset, pool: LabeledDataset,
                     cfg: ExperimentConfig, rng: np.random.Generator) -> dict:
    """MI estimate, gap quantile and assembled bound on one test distribution."""
    x_ref, y_ref = as_xy(reference)
    n_labels = dec.n_labels
    mi = mi_bound(enc, x_ref)
    ref_tab = loss_table(enc, dec, x_ref, cfg.mc_samples, rng)
    pool_tab = loss_table(enc, dec, pool.inputs, cfg.mc_samples, rng)
    ref_losses = ref_tab.losses[np.arange(len(y_ref)), y_ref]
    pool_losses = pool_tab.losses[np.arange(len(pool)), pool.labels]
    gap = gap_quantile_from_losses(ref_losses, pool_losses, cfg.mini_test_size, cfg.quantile_level, rng)

    n = cfg.mini_test_size
    p_y = np.bincount(y_ref, minlength=n_labels) / len(y_ref)
    binary = isinstance(enc, RBMEncoder)
    log_vol = enc.m * math.log(2.0) if binary else _volume_log(
        np.minimum(ref_tab.u_low, pool_tab.u_low), np.maximum(ref_tab.u_high, pool_tab.u_high))
    eta_probe = min(ref_tab.min_prob, pool_tab.min_prob)

    mi_coef_base = math.log(n) / math.sqrt(n) * mi.sqrt_bound
    # A_delta does not depend on eta or Vol, so the sweep can run before they are final
    a_delta = math.sqrt(2.0) * (1.0 + math.sqrt(math.log((n_labels + 4) / cfg.delta)))
    sweep = sweep_k(ref_tab.losses, [k for k in cfg.k_grid if k <= len(y_ref)], a_delta * mi_coef_base, rng=rng)
    part = sweep.partitions[sweep.best.requested_k]
    exact = binary and enc.m <= ENUMERATION_LIMIT
    qm = quantized_model(part, enc, (x_ref, y_ref), ref_tab.losses, "exact" if exact else "monte_carlo",
                         rng=rng, n_labels=n_labels, bank_size=cfg.hellinger_bank)
    dec_table = decoder_prob(dec, qm.u_states)
    if exact:
        hl, hl_se = hellinger(dec_table, qm.decoder_d, qm.u_weights), 0.0
        eta_probe = min(eta_probe, float(dec_table.min()))
    else:
        hl, hl_se = hellinger_mc(dec_table, qm.decoder_d)
        eta_probe = min(eta_probe, float(dec_table.min()))
    eta = min(max(eta_probe, 1e-12), 1.0 - 1e-12)
    consts = delta_constants(cfg.delta, n_labels, float(max(p_y[p_y > 0].min(), 1e-12)), eta, log_vol_u=log_vol)
    report = assemble_bound(mi, sweep.reports, hl, consts, n)
    return {
        "mi": mi,
        "gap": gap,
        "bound": report,
        "extras": {
            "hellinger_stderr": hl_se,
            "eta": eta,
            "log_vol_u": log_vol,
            "quantize_mode": qm.mode,
            "sweep": [asdict(r) for r in sweep.reports],
        },
    }


def _variant_sets(reference, pool, variant: str, cfg: ExperimentConfig):
    if variant == "clean":
        return reference, pool
    spec = cfg.perturb_spec()
    return perturb(reference, spec), perturb(pool, spec)


def run_one(cfg: ExperimentConfig, data: LabeledDataset, lam: float, seed: int) -> list[Record]:
    """Train once for (lam, seed) and evaluate every requested test variant."""
    t0 = time.perf_counter()
    train, reference, pool, _ = split_data(data, cfg, seed)
    # keyed on the bit pattern of lam so a run reproduces regardless of grid position
    lam_key = int(np.float64(lam).view(np.uint64))
    try:
        result = train_model(cfg.train_spec(lam, seed), train.inputs, train.labels, n_labels=10 if data.n_labels <= 10 else data.n_labels)
    except (InfogapError, FloatingPointError) as exc:
        return [Record(lam, seed, v, status="failed", error=str(exc), wall_time=time.perf_counter() - t0)
                for v in cfg.test_variants]
    train_time = time.perf_counter() - t0
    records = []
    for vi, variant in enumerate(VARIANTS):
        if variant not in cfg.test_variants:
            continue
        t1 = time.perf_counter()
        rng = np.random.default_rng([seed, lam_key, vi, 99])
        ref_v, pool_v = _variant_sets(reference, pool, variant, cfg)
        try:
            with np.errstate(over="ignore", under="ignore"):
                out = evaluate_variant(result.encoder, result.decoder, ref_v, pool_v, cfg, rng)
        except (InfogapError, FloatingPointError) as exc:
            records.append(Record(lam, seed, variant, status="failed", error=str(exc), loss_curve=result.curve))
            continue
        out["extras"]["decoder_curve"] = result.decoder_curve
        out["extras"]["train_time"] = train_time
        records.append(Record(lam, seed, variant, "ok", "", out["mi"], out["gap"], out["bound"], result.curve,
                              train_time + time.perf_counter() - t1, out["extras"]))
    return records


def lambda_sweep(cfg: ExperimentConfig, data: LabeledDataset | None = None, progress=None) -> RunArtifact:
    data = load_dataset(cfg) if data is None else data
    artifact = RunArtifact(cfg)
    for lam in cfg.lambda_grid:
        for seed in cfg.seeds:
            recs = run_one(cfg, data, lam, seed)
            artifact.records.extend(recs)
            if progress:
                for r in recs:
                    progress(r)
    return artifact


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, field_names, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(field_names), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in field_names})


def optimizer_note(cfg: ExperimentConfig) -> str:
    """Optimizer actually used; the original experiments do not name theirs."""
    mom = f"momentum {cfg.momentum}" + (f" -> {cfg.final_momentum}" if cfg.final_momentum is not None else "")
    cap = f", step capped at {cfg.kl_step_cap}/lambda" if cfg.kl_step_cap is not None else ""
    return f"plain SGD (assumed), lr {cfg.learning_rate}, {mom}{cap}"


def emit_report(artifact: RunArtifact, out_dir) -> dict:
    """Write runs.csv, aggregates.csv, config.json and run.json (timings live only in run.json)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = {
        "runs": out / "runs.csv",
        "aggregates": out / "aggregates.csv",
        "config": out / "config.json",
        "run": out / "run.json",
    }
    write_csv(paths["runs"], Record.RUN_FIELDS, [r.row() for r in artifact.records])
    write_csv(paths["aggregates"], RunArtifact.AGG_FIELDS, artifact.aggregates())
    paths["config"].write_text(json.dumps(artifact.config.to_dict(), indent=2, sort_keys=True) + "\n")
    paths["run"].write_text(json.dumps(
        {"config": artifact.config.to_dict(), "optimizer": optimizer_note(artifact.config),
         "records": [r.to_dict() for r in artifact.records]},
        indent=1, default=_json_default) + "\n")
    return paths


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def read_runs_csv(path) -> list[dict]:
    """Parse runs.csv back into typed rows."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({
                "lambda": float(row["lambda"]),
                "seed": int(row["seed"]),
                "variant": row["variant"],
                "status": row["status"],
                "mi_sqrt_bound": float(row["mi_sqrt_bound"]),
                "mi_total_kl": float(row["mi_total_kl"]),
                "gap_quantile": float(row["gap_quantile"]),
                "reference_risk": float(row["reference_risk"]),
                "n_mini_tests": int(row["n_mini_tests"]),
                "bound_total": float(row["bound_total"]),
                "chosen_k": int(row["chosen_k"]),
            })
    return out


def save_model(enc, dec: SoftmaxDecoder, path, extra: dict | None = None) -> None:
    doc = {"encoder": encoder_to_dict(enc), "decoder": dec.to_dict()}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc))


def load_model(path):
    doc = json.loads(Path(path).read_text())
    return encoder_from_dict(doc["encoder"]), SoftmaxDecoder.from_dict(doc["decoder"])
