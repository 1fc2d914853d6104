"""Command-line entry point.

Exit codes: 0 success, 1 a verification property failed, 2 invalid input or
configuration, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import harness
from .classifier import as_xy, gap_quantile_from_losses, loss_table
from .data import LabeledDataset, load_idx, perturb, write_idx
from .errors import InfogapError, NumericError
from .mi import mi_bound
from .quantizer import sweep_k


def _config(args) -> harness.ExperimentConfig:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    if getattr(args, "family", None):
        doc["encoder_family"] = args.family
    if getattr(args, "paper_scale", False):
        doc["paper_scale"] = True
    if args.perturb_seed is not None:
        doc["perturb_seed"] = args.perturb_seed
    return harness.ExperimentConfig.from_dict(doc)


def _load_data(path, cfg: harness.ExperimentConfig | None = None) -> LabeledDataset:
    if path:
        return LabeledDataset.load_npz(path)
    return harness.load_dataset(cfg or harness.ExperimentConfig())


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj, path: Path | None = None) -> None:
    text = json.dumps(obj, indent=2, default=harness._json_default)
    if path is not None:
        path.write_text(text + "\n")
    print(text)


def _eval_sets(args, cfg):
    """Reference and pool sets for the model's seed, optionally perturbed."""
    data = _load_data(args.data, cfg)
    _, reference, pool, _ = harness.split_data(data, cfg, args.seed)
    if args.variant == "perturbed":
        reference, pool = perturb(reference, cfg.perturb_spec()), perturb(pool, cfg.perturb_spec())
    return reference, pool


def cmd_ingest(args) -> int:
    data = load_idx(args.images, args.labels)
    out = _out(args) / "dataset.npz"
    data.save_npz(out)
    print(f"{len(data)} images {data.images.shape[1:]} -> {out}")
    return 0


def cmd_perturb(args) -> int:
    cfg = _config(args)
    data = _load_data(args.data, cfg)
    shifted = perturb(data, cfg.perturb_spec())
    out = _out(args)
    shifted.save_npz(out / "perturbed.npz")
    if args.idx:
        write_idx(shifted, out / "perturbed-images-idx3-ubyte", out / "perturbed-labels-idx1-ubyte")
    print(f"{shifted.provenance}: {len(shifted)} images -> {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    data = _load_data(args.data, cfg)
    train, *_ = harness.split_data(data, cfg, args.seed)
    from .training import train_model

    result = train_model(cfg.train_spec(args.lam, args.seed), train.inputs, train.labels, n_labels=10)
    out = _out(args)
    harness.save_model(result.encoder, result.decoder, out / "model.json",
                       {"lambda": args.lam, "seed": args.seed, "curve": result.curve, "decoder_curve": result.decoder_curve})
    print(f"final objective {result.curve[-1]!r} -> {out / 'model.json'}")
    return 0


def cmd_mi(args) -> int:
    cfg = _config(args)
    enc, _ = harness.load_model(args.model)
    reference, _ = _eval_sets(args, cfg)
    _dump(mi_bound(enc, reference).to_dict(), _out(args) / "mi.json")
    return 0


def cmd_gap(args) -> int:
    cfg = _config(args)
    enc, dec = harness.load_model(args.model)
    reference, pool = _eval_sets(args, cfg)
    rng = np.random.default_rng(args.seed)
    x_r, y_r = as_xy(reference)
    ref = loss_table(enc, dec, x_r, cfg.mc_samples, rng).losses[np.arange(len(y_r)), y_r]
    pl = loss_table(enc, dec, pool.inputs, cfg.mc_samples, rng).losses[np.arange(len(pool)), pool.labels]
    gap = gap_quantile_from_losses(ref, pl, cfg.mini_test_size, cfg.quantile_level, rng)
    _dump(asdict(gap) | {"n_mini_tests": gap.n_mini_tests}, _out(args) / "gap.json")
    return 0


def cmd_bound(args) -> int:
    cfg = _config(args)
    enc, dec = harness.load_model(args.model)
    reference, pool = _eval_sets(args, cfg)
    with np.errstate(over="ignore", under="ignore"):
        res = harness.evaluate_variant(enc, dec, reference, pool, cfg, np.random.default_rng(args.seed))
    _dump(res["bound"].to_dict(), _out(args) / "bound.json")
    return 0


def cmd_quantize_sweep(args) -> int:
    cfg = _config(args)
    enc, dec = harness.load_model(args.model)
    reference, _ = _eval_sets(args, cfg)
    rng = np.random.default_rng(args.seed)
    table = loss_table(enc, dec, reference.inputs, cfg.mc_samples, rng).losses
    grid = [int(k) for k in args.k_grid.split(",")] if args.k_grid else cfg.k_grid
    res = sweep_k(table, grid, args.mi_term, rng=rng)
    out = _out(args) / "quantize.csv"
    out.write_text(res.to_csv())
    sys.stdout.write(res.to_csv())
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    data = _load_data(args.data, cfg)

    def report(rec):
        tail = f"mi={rec.mi.sqrt_bound:.4f} gap={rec.gap.quantile_value:.4f}" if rec.status == "ok" else rec.error
        print(f"lambda={rec.lam!r} seed={rec.seed} {rec.variant}: {rec.status} {tail}", flush=True)

    print(f"optimizer: {harness.optimizer_note(cfg)}", flush=True)
    art = harness.lambda_sweep(cfg, data, progress=report)
    paths = harness.emit_report(art, args.out)
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 0


def cmd_oracle_verify(args) -> int:
    from .oracle import verify_suite

    results = verify_suite()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    def globals_(suppress: bool) -> argparse.ArgumentParser:
        # flags are accepted before or after the subcommand; the copy on each
        # subparser suppresses its defaults so it cannot overwrite earlier values
        g = argparse.ArgumentParser(add_help=False)

        def d(v):
            return argparse.SUPPRESS if suppress else v

        g.add_argument("--seed", type=int, default=d(0), help="run / split seed (default 0)")
        g.add_argument("--config", default=d(None), help="JSON document mirroring ExperimentConfig")
        g.add_argument("--out", default=d("out"), help="output directory (default ./out)")
        g.add_argument("--perturb-seed", type=int, default=d(None), help="seed of the test-time perturbation")
        return g

    common = globals_(True)
    p = argparse.ArgumentParser(prog="infogap", parents=[globals_(False)], description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("ingest", cmd_ingest, "read an IDX image/label pair into dataset.npz")
    sp.add_argument("--images", required=True)
    sp.add_argument("--labels", required=True)

    sp = add("perturb", cmd_perturb, "rotate and translate a dataset")
    sp.add_argument("--data", help="dataset .npz (default: configured or bundled MNIST subset)")
    sp.add_argument("--idx", action="store_true", help="also write IDX files for inspection")

    sp = add("train", cmd_train, "train one encoder/decoder pair")
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--family", choices=sorted(harness.DEFAULT_LAMBDAS))
    sp.add_argument("--data")

    for name, fn, help_ in (
        ("mi", cmd_mi, "MI upper bound of a trained model on the reference split"),
        ("gap", cmd_gap, "gap quantile over disjoint mini-tests"),
        ("bound", cmd_bound, "assemble every evaluated term of the gap bound"),
        ("quantize-sweep", cmd_quantize_sweep, "epsilon/r trade-off over a grid of K"),
    ):
        sp = add(name, fn, help_)
        sp.add_argument("--model", required=True, help="model.json written by `train`")
        sp.add_argument("--data")
        sp.add_argument("--variant", choices=harness.VARIANTS, default="clean")
        if name == "quantize-sweep":
            sp.add_argument("--k-grid", help="comma separated K values (default from config)")
            sp.add_argument("--mi-term", type=float, default=0.0, help="coefficient multiplying r(K)")

    sp = add("sweep", cmd_sweep, "full lambda x seed sweep and report")
    sp.add_argument("--family", choices=sorted(harness.DEFAULT_LAMBDAS))
    sp.add_argument("--paper-scale", action="store_true", help="restore the original experiment sizes")
    sp.add_argument("--data")

    add("oracle-verify", cmd_oracle_verify, "brute-force checks on small discrete worlds")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (InfogapError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
