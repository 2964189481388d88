"""Command line entry point.

    moreaugen preset list
    moreaugen sweep --preset junk-ridge --trials 20 --out runs/junk_ridge
    moreaugen generate --preset fig1-regression --out data.csv
    moreaugen fit --preset junk-ridge --data data.csv --out path.csv
    moreaugen oracle null --preset fig1-classification
    moreaugen bound optimistic --train-loss 0.1 --C 5 --n 100

Exit codes: 0 on success, 2 on a configuration error, 3 when at least half of
the fitted path points did not converge.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import bounds, oracles
from .harness import (
    PRESET_NAMES,
    ConfigError,
    ExperimentConfig,
    build_model,
    fit_path,
    preset,
    regpath_to_csv,
    run_sweep,
)
from .synthdata import Dataset, derive_seed

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 2, 3


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment configuration")
    g.add_argument("--preset", choices=PRESET_NAMES, help="start from a named figure configuration")
    g.add_argument("--config", help="JSON file with configuration fields (may name a preset)")
    g.add_argument("--n", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--trials", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--delta", type=float)
    g.add_argument("--workers", type=int, help="trials run concurrently in this many threads")
    g.add_argument("--paper-scale", action="store_true", help="use the full problem sizes of the figures")
    g.add_argument("--noise-is-std", action="store_true", help="read the label noise parameter as a std")


def config_from_args(args) -> ExperimentConfig:
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        if args.preset:
            data.setdefault("preset", args.preset)
        if "preset" in data and args.paper_scale:
            data["paper_scale"] = True
        cfg = ExperimentConfig.from_dict(data)
    elif args.preset:
        cfg = preset(args.preset, paper_scale=args.paper_scale)
    else:
        cfg = ExperimentConfig()
    for name in ("n", "d", "trials", "seed", "delta", "workers"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "noise_is_std", False):
        cfg.noise_is_std = True
    if getattr(args, "out", None):
        cfg.out = args.out
    return cfg.validate()


# --- subcommands -----------------------------------------------------------

def cmd_preset(args) -> int:
    if args.action == "list":
        for name in PRESET_NAMES:
            print(name)
        return EXIT_OK
    if not args.name:
        raise ConfigError("preset show needs a name")
    print(preset(args.name, paper_scale=args.paper_scale).to_json())
    return EXIT_OK


def _sweep_prefix(out: str) -> str:
    return out[:-4] if out.endswith(".csv") else out


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    res = run_sweep(cfg)
    if args.out:
        for p in res.write(_sweep_prefix(args.out)):
            print(p, file=sys.stderr)
    else:
        res.to_csv(None)
    frac = res.nonconverged_fraction
    print(f"{cfg.name}: {len(res.rows)} rows in {res.elapsed:.1f}s, null risk {res.null_risk:.6g}, "
          f"optimal risk {res.optimal_risk:.6g}, non-converged {frac:.1%}", file=sys.stderr)
    return EXIT_NONCONVERGED if frac >= 0.5 else EXIT_OK


def _dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.experiment != "path":
        raise ConfigError("this command needs a path experiment configuration")
    # the same draw as trial 0 of a sweep
    return build_model(cfg).sample(cfg.n, derive_seed(cfg.seed, 0, 0))


def cmd_generate(args) -> int:
    cfg = config_from_args(args)
    ds = _dataset(cfg)
    if args.out:
        ds.to_csv(args.out)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow([f"x_{j + 1}" for j in range(ds.d)] + ["y"])
        for xi, yi in zip(ds.X, ds.y):
            w.writerow([f"{v:.17g}" for v in xi] + [f"{yi:.17g}"])
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = config_from_args(args)
    if args.fitter:
        cfg.fitter = args.fitter
    if args.grid_size:
        cfg.grid_size = args.grid_size
    if args.data:
        try:
            ds = Dataset.from_csv(args.data)
        except OSError as exc:
            raise ConfigError(f"cannot read data {args.data}: {exc}") from exc
    else:
        ds = _dataset(cfg)
    if ds.d != cfg.d:
        cfg.d = ds.d
    cfg.validate()
    path = fit_path(cfg, ds.X, ds.y)
    regpath_to_csv(path, args.out)
    conv = np.asarray(path.converged, dtype=bool)
    return EXIT_NONCONVERGED if np.mean(~conv) >= 0.5 else EXIT_OK


def _read_coefs(path_csv):
    with open(path_csv, newline="") as fh:
        recs = list(csv.DictReader(fh))
    if not recs:
        raise ConfigError(f"{path_csv} holds no rows")
    wcols = sorted((c for c in recs[0] if c.startswith("w_")), key=lambda c: int(c[2:]))
    W = np.array([[float(r[c]) for c in wcols] for r in recs])
    b = np.array([float(r.get("intercept", 0.0) or 0.0) for r in recs])
    return W, b


def cmd_oracle(args) -> int:
    q = args.query
    if q == "moments":
        mt = oracles.moment_table(args.kind, args.scale, args.method, args.mc_samples, args.mc_seed, args.cache)
        out = {k: getattr(mt, k) for k in ("kind", "scale", "m_abs", "m_sgn", "m_cos", "m_zcos", "m_cos2", "method")}
        out["kind"] = str(getattr(mt.kind, "value", mt.kind))
        print(json.dumps(out, indent=2))
        return EXIT_OK
    cfg = config_from_args(args)
    if cfg.experiment != "path":
        raise ConfigError("oracle queries need a path experiment configuration")
    model = build_model(cfg)
    if q == "null":
        val = (oracles.classification_null_risk(model) if model.classification
               else oracles.regression_null_risk(model, with_intercept=cfg.intercept))
        print(json.dumps({"query": q, "value": val}))
    elif q == "optimal":
        if model.classification:
            w, b, risk = oracles.optimal_classifier(model, seed=cfg.seed)
            print(json.dumps({"query": q, "value": risk, "w1": float(w[0]), "b": float(b)}))
        else:
            lab = model.labels
            if hasattr(lab, "scale"):
                w, risk = oracles.misspecified_optimal_predictor(model)
            else:
                w, risk = lab.wstar_vector(model.d), lab.sigma_sq
            print(json.dumps({"query": q, "value": risk, "w_head": [float(v) for v in w[:3]]}))
    elif q == "bayes-zero-one":
        print(json.dumps({"query": q, "value": oracles.bayes_zero_one_risk(model)}))
    else:  # risk of coefficients from a fit CSV
        if not args.coefs:
            raise ConfigError("the risk query needs --coefs PATH_CSV")
        W, b = _read_coefs(args.coefs)
        if W.shape[1] != model.d:
            raise ConfigError(f"coefficients have dimension {W.shape[1]}, model has {model.d}")
        if model.classification:
            val = oracles.classification_pop_sq_hinge(W, b, model, cfg.n_mc, cfg.seed, cfg.oracle_method).value
        else:
            val = oracles.regression_pop_risk(W, b, model, n_mc=cfg.n_mc, seed=cfg.seed).value
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["path_index", "test_loss"])
        for i, v in enumerate(np.atleast_1d(val)):
            w.writerow([i, f"{v:.17g}"])
    return EXIT_OK


def _need(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise ConfigError(f"bound {args.kind} needs {', '.join(missing)}")


def cmd_bound(args) -> int:
    k = args.kind
    if k == "optimistic":
        _need(args, "train_loss", "C", "n")
        val = bounds.optimistic_bound(args.train_loss, args.C, args.n, args.correction)
    elif k == "lipschitz":
        _need(args, "train_loss", "C", "n")
        val = bounds.lipschitz_bound(args.train_loss, args.M, args.C, args.n)
    elif k == "smooth-interpolator":
        _need(args, "C", "n")
        val = bounds.smooth_interpolator_bound(args.H, args.C, args.n)
    elif k == "psi":
        _need(args, "test_loss", "complexity")
        val = bounds.summary_functional_psi(args.test_loss, args.complexity)
    elif k == "ols-psi":
        _need(args, "d", "n")
        val = bounds.ols_psi_excess(args.sigma_sq, args.d, args.n)
    elif k == "vc-correction":
        _need(args, "tau", "k", "n")
        val = bounds.vc_correction(args.tau, args.k, args.n, args.delta)
    elif k == "c-simple":
        _need(args, "norm_w", "trace_perp", "n")
        val = bounds.c_simple(args.norm_w, args.trace_perp, args.n)
    else:  # c-isotropic
        _need(args, "norm_w", "d", "n")
        val = bounds.c_isotropic(args.norm_w, args.d, args.n)
    print(json.dumps({"kind": k, "value": float(val) if math.isfinite(val) else str(val)}))
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moreaugen", description="Moreau envelope generalization experiments")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("preset", help="list or show the figure presets")
    sp.add_argument("action", choices=("list", "show"))
    sp.add_argument("name", nargs="?", choices=PRESET_NAMES)
    sp.add_argument("--paper-scale", action="store_true")
    sp.set_defaults(func=cmd_preset)

    sw = sub.add_parser("sweep", help="run a full experiment and write CSV files")
    _add_config_flags(sw)
    sw.add_argument("--out", help="output prefix: PREFIX.csv, PREFIX_aggregate.csv, PREFIX.json (default: stdout)")
    sw.set_defaults(func=cmd_sweep)

    gen = sub.add_parser("generate", help="emit one dataset as CSV")
    _add_config_flags(gen)
    gen.add_argument("--out", help="CSV path (default: stdout)")
    gen.set_defaults(func=cmd_generate)

    ft = sub.add_parser("fit", help="fit one regularization path and emit it as CSV")
    _add_config_flags(ft)
    ft.add_argument("--data", help="dataset CSV (default: generate trial-0 data from the configuration)")
    ft.add_argument("--fitter", choices=("ridge", "lasso", "sq_hinge_l2", "sq_hinge_l1", "constrained_l2"))
    ft.add_argument("--grid-size", type=int)
    ft.add_argument("--out", help="CSV path (default: stdout)")
    ft.set_defaults(func=cmd_fit)

    orc = sub.add_parser("oracle", help="population risk queries")
    orc.add_argument("query", choices=("null", "optimal", "bayes-zero-one", "moments", "risk"))
    _add_config_flags(orc)
    orc.add_argument("--coefs", help="path CSV from `fit` (for the risk query)")
    orc.add_argument("--kind", default="gaussian", help="feature distribution (moments query)")
    orc.add_argument("--scale", type=float, default=1.0)
    orc.add_argument("--method", default="quad", choices=("quad", "mc"))
    orc.add_argument("--mc-samples", type=int, default=10_000_000)
    orc.add_argument("--mc-seed", type=int, default=0)
    orc.add_argument("--cache", help="JSON cache file for moment tables")
    orc.set_defaults(func=cmd_oracle)

    bd = sub.add_parser("bound", help="evaluate a bound formula")
    bd.add_argument("kind", choices=("optimistic", "lipschitz", "smooth-interpolator", "psi", "ols-psi",
                                     "vc-correction", "c-simple", "c-isotropic"))
    bd.add_argument("--train-loss", type=float)
    bd.add_argument("--test-loss", type=float)
    bd.add_argument("--complexity", type=float, help="C(w)^2 / n for the psi functional")
    bd.add_argument("--C", type=float, help="complexity C(w), not divided by sqrt(n)")
    bd.add_argument("--n", type=int)
    bd.add_argument("--d", type=int)
    bd.add_argument("--k", type=int)
    bd.add_argument("--M", type=float, default=1.0)
    bd.add_argument("--H", type=float, default=2.0)
    bd.add_argument("--tau", type=float)
    bd.add_argument("--sigma-sq", type=float, default=1.0)
    bd.add_argument("--norm-w", type=float)
    bd.add_argument("--trace-perp", type=float)
    bd.add_argument("--correction", type=float, default=1.0)
    bd.add_argument("--delta", type=float, default=bounds.DEFAULT_DELTA)
    bd.set_defaults(func=cmd_bound)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
