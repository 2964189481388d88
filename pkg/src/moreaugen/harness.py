"""Experiment orchestration: regularization-path sweeps over repeated trials,
bound evaluation at every path point, bootstrap intervals and CSV output.

A sweep is fully determined by its ExperimentConfig.  Trial t draws its data
from derive_seed(seed, t, 0), its oracle randomness from derive_seed(seed, t, 1)
and its Rademacher signs from derive_seed(seed, t, 2, i), so results do not
depend on the order in which concurrent trials finish.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from .bounds import (
    DEFAULT_DELTA,
    build_cov_split,
    c_delta_ball,
    lipschitz_bound,
    optimistic_bound,
    rademacher_linf_mc,
    summary_functional_psi,
)
from .fitters import (
    RegPath,
    constrained_erm,
    default_lasso_grid,
    default_ridge_grid,
    lasso_path,
    min_l1_interpolator,
    min_norm_least_squares,
    ridge_path,
    sq_hinge_path,
)
from .envelope import Square
from .oracles import (
    bayes_zero_one_risk,
    classification_null_risk,
    classification_pop_sq_hinge,
    misspecified_optimal_predictor,
    moment_table,
    regression_null_risk,
    regression_pop_risk,
    zero_one_risk,
)
from .synthdata import (
    DataModel,
    ExplicitDiagonal,
    FeatureDistribution,
    FeatureKind,
    Harmful,
    Isotropic,
    Junk,
    LogisticClassification,
    MisspecifiedRegression,
    MultiIndex,
    SignClassification,
    WellSpecifiedLinear,
    derive_seed,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SweepRow",
    "SweepResult",
    "PRESET_NAMES",
    "preset",
    "build_model",
    "run_sweep",
    "run_sharpness_l1",
    "sharpness_radius",
    "sharpness_summary",
    "bootstrap_ci",
    "aggregate_rows",
    "read_rows",
    "regpath_to_csv",
    "fit_path",
]

SWEEP_COLUMNS = ("trial", "path_index", "reg_value", "train_loss", "test_loss", "bound_value", "norm_l1", "norm_l2")
AGGREGATE_COLUMNS = SWEEP_COLUMNS + ("mean_test", "ci_lo", "ci_hi", "mean_bound")

FEATURES = tuple(k.value for k in FeatureKind)
COVARIANCES = ("isotropic", "junk", "harmful")
LABELS = ("misspecified", "well_specified", "logistic", "sign")
FITTERS = ("ridge", "lasso", "sq_hinge_l2", "sq_hinge_l1", "constrained_l2")
BOUNDS = ("auto", "ball", "ball_delta", "isotropic", "rademacher", "psi", "pop_sq_hinge", "none")
EXPERIMENTS = ("path", "sharpness")


class ConfigError(ValueError):
    """Raised for an invalid or unknown experiment configuration."""


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one sweep.

    ``grid_lo`` and ``grid_hi`` are relative to the data-dependent scale of
    the fitter (top squared singular value over n for l2 penalties, the
    smallest penalty giving w = 0 for l1 penalties, the norm of the OLS fit
    for ``constrained_l2``).  An explicit ``grid`` overrides them.
    """

    name: str = "custom"
    experiment: str = "path"
    features: str = "gaussian"
    covariance: str = "junk"
    k: int = 3
    eps: float = 0.05
    labels: str = "misspecified"
    label_params: dict = field(default_factory=dict)
    noise_is_std: bool = False
    fitter: str = "ridge"
    fit_intercept: Optional[bool] = None
    grid: Optional[List[float]] = None
    grid_size: int = 50
    grid_lo: Optional[float] = None
    grid_hi: Optional[float] = None
    interpolator: bool = False
    n: int = 100
    d: int = 1000
    trials: int = 20
    delta: float = DEFAULT_DELTA
    bound: str = "auto"
    correction: float = 1.0
    b_reps: int = 300
    test_loss: str = "auto"
    n_mc: int = 1_000_000
    oracle_method: str = "quad"
    tol: Optional[float] = None
    seed: int = 0
    workers: int = 1
    ns: List[int] = field(default_factory=lambda: [100, 200, 400])
    dj_factor: float = 20.0
    sigma: float = 1.0
    out: Optional[str] = None

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.experiment in EXPERIMENTS, f"unknown experiment {self.experiment!r}")
        need(int(self.trials) >= 1, "trials must be at least 1")
        need(int(self.workers) >= 1, "workers must be at least 1")
        need(0 < self.delta < 1, "delta must lie in (0, 1)")
        need(0 < self.correction <= 1, "correction must lie in (0, 1]")
        if self.experiment == "sharpness":
            need(len(self.ns) > 0 and all(int(m) >= 1 for m in self.ns), "ns must be a nonempty list of n >= 1")
            need(self.dj_factor >= 1, "dj_factor must be at least 1")
            need(self.sigma >= 0, "sigma must be nonnegative")
            return self
        need(int(self.n) >= 1 and int(self.d) >= 1, "n and d must be at least 1")
        need(self.features in FEATURES, f"unknown feature distribution {self.features!r}")
        need(self.covariance in COVARIANCES, f"unknown covariance {self.covariance!r}")
        need(self.labels in LABELS, f"unknown label model {self.labels!r}")
        need(self.fitter in FITTERS, f"unknown fitter {self.fitter!r}")
        need(self.bound in BOUNDS, f"unknown bound kind {self.bound!r}")
        need(self.test_loss in ("auto", "zero_one"), f"unknown test loss {self.test_loss!r}")
        need(self.oracle_method in ("mc", "quad"), f"unknown oracle method {self.oracle_method!r}")
        need(0 <= self.k <= self.d, "need 0 <= k <= d")
        need(self.eps > 0, "eps must be positive")
        need(self.n_mc >= 1 and self.b_reps >= 1, "n_mc and b_reps must be positive")
        if self.grid is not None:
            need(len(self.grid) > 0 and all(float(g) > 0 for g in self.grid), "grid must be nonempty and positive")
        else:
            need(int(self.grid_size) >= 1, "grid_size must be at least 1")
        classif = self.labels in ("logistic", "sign")
        if classif:
            need(self.fitter.startswith("sq_hinge"), "classification labels need a squared-hinge fitter")
        else:
            need(not self.fitter.startswith("sq_hinge"), "regression labels need a square-loss fitter")
            need(self.test_loss == "auto", "the zero-one test loss needs classification labels")
        if self.labels == "misspecified":
            need(self.d >= 3, "the misspecified model needs d >= 3")
        return self

    @property
    def intercept(self) -> bool:
        if self.fit_intercept is not None:
            return bool(self.fit_intercept)
        return self.labels in ("logistic", "sign")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        base = cls()
        if "preset" in data:
            base = preset(data.pop("preset"), paper_scale=bool(data.pop("paper_scale", False)))
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        try:
            return dataclasses.replace(base, **data).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)


# --- presets ---------------------------------------------------------------

_DESK_OVER = dict(n=100, d=1000)
_DESK_PROP = dict(n=100, d=120)

# name -> (fields, paper-scale overrides)
_PRESETS = {
    "fig1-regression": (dict(covariance="junk", k=3, labels="misspecified", fitter="ridge", **_DESK_OVER),
                        dict(n=300, d=3000)),
    "fig1-classification": (dict(covariance="junk", k=1, labels="logistic", fitter="sq_hinge_l2", **_DESK_OVER),
                            dict(n=100, d=2000)),
    "isotropic-ridge": (dict(covariance="isotropic", labels="misspecified", fitter="ridge", **_DESK_PROP),
                        dict(n=300, d=350)),
    "junk-ridge": (dict(covariance="junk", k=3, labels="misspecified", fitter="ridge", **_DESK_OVER),
                   dict(n=300, d=3000)),
    "nonbenign-ridge": (dict(covariance="harmful", k=3, labels="misspecified", fitter="ridge", **_DESK_OVER),
                        dict(n=300, d=3000)),
    "isotropic-lasso": (dict(covariance="isotropic", labels="misspecified", fitter="lasso", **_DESK_PROP),
                        dict(n=300, d=350)),
    "junk-lasso": (dict(covariance="junk", k=3, labels="misspecified", fitter="lasso", **_DESK_OVER),
                   dict(n=300, d=3000)),
    "nonbenign-lasso": (dict(covariance="harmful", k=3, labels="misspecified", fitter="lasso", **_DESK_OVER),
                        dict(n=300, d=3000)),
    "l2-margin": (dict(covariance="junk", k=1, labels="logistic", fitter="sq_hinge_l2", **_DESK_OVER),
                  dict(n=100, d=2000)),
    "l1-margin": (dict(covariance="junk", k=1, labels="logistic", fitter="sq_hinge_l1", **_DESK_OVER),
                  dict(n=100, d=2000)),
    "sharpness-l1": (dict(experiment="sharpness", ns=[100, 200, 400], dj_factor=20.0, sigma=1.0),
                     dict(ns=[100, 200, 400, 800])),
    "ols-psi": (dict(covariance="isotropic", k=0, labels="well_specified", label_params={"noise_var": 1.0},
                     fitter="constrained_l2", bound="psi", n=400, d=100),
                dict()),
    "zero-one-consistency": (dict(covariance="junk", k=1, labels="logistic", label_params={"bstar": 0.0},
                                  fitter="sq_hinge_l2", fit_intercept=False, test_loss="zero_one",
                                  bound="pop_sq_hinge", **_DESK_OVER),
                             dict(n=100, d=2000)),
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str, paper_scale: bool = False) -> ExperimentConfig:
    """Configuration of a named figure, at desk scale unless ``paper_scale``."""
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")
    fields_, paper = _PRESETS[name]
    kw = {k: (dict(v) if isinstance(v, dict) else list(v) if isinstance(v, list) else v) for k, v in fields_.items()}
    if paper_scale:
        kw.update(paper)
    return ExperimentConfig(name=name, **kw).validate()


def build_model(cfg: ExperimentConfig) -> DataModel:
    """The joint law of (x, y) described by ``cfg``."""
    feats = FeatureDistribution(FeatureKind(cfg.features))
    if cfg.covariance == "isotropic":
        cov = Isotropic(cfg.d)
    elif cfg.covariance == "junk":
        cov = Junk(cfg.d, cfg.k, cfg.eps)
    else:
        cov = Harmful(cfg.d, cfg.k)
    p = dict(cfg.label_params)
    try:
        if cfg.labels == "misspecified":
            lab = MisspecifiedRegression(noise_is_std=cfg.noise_is_std, **p)
        elif cfg.labels == "well_specified":
            if "wstar" in p:
                p["wstar"] = tuple(p["wstar"])
            lab = WellSpecifiedLinear(noise_is_std=cfg.noise_is_std, **p)
        elif cfg.labels == "logistic":
            lab = LogisticClassification(**p)
        else:
            lab = SignClassification(**p)
    except TypeError as exc:
        raise ConfigError(f"bad label_params: {exc}") from exc
    return DataModel(feats, cov, lab)


# --- bootstrap -------------------------------------------------------------

def bootstrap_ci(values, level: float = 0.95, resamples: int = 1000, seed=0) -> Tuple[float, float]:
    """Percentile bootstrap interval for the mean of ``values``."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("need at least one value")
    m = float(v.mean())
    if v.size == 1 or np.ptp(v) == 0 or not np.all(np.isfinite(v)):
        return m, m
    res = stats.bootstrap((v,), np.mean, n_resamples=resamples, confidence_level=level, method="percentile",
                          vectorized=True, random_state=np.random.default_rng(seed))
    lo, hi = float(res.confidence_interval.low), float(res.confidence_interval.high)
    # the resampled means can miss the sample mean only in degenerate small samples
    return min(lo, m), max(hi, m)


# --- results ---------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    trial: int
    path_index: int
    reg_value: float
    train_loss: float
    test_loss: float
    bound_value: float
    norm_l1: float
    norm_l2: float
    converged: bool = True

    def values(self):
        return tuple(getattr(self, c) for c in SWEEP_COLUMNS)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    data = buf.getvalue()
    if path is None:
        print(data, end="")
        return
    with open(path, "w", newline="") as fh:
        fh.write(data)


def aggregate_rows(rows: Sequence[SweepRow], level: float = 0.95, resamples: int = 1000, seed=0) -> List[dict]:
    """Per-path-index means over trials plus a bootstrap interval for the test loss."""
    by_index = {}
    for r in sorted(rows, key=lambda r: (r.path_index, r.trial)):
        by_index.setdefault(r.path_index, []).append(r)
    out = []
    for i, group in sorted(by_index.items()):
        cols = {c: np.array([getattr(r, c) for r in group], dtype=float) for c in SWEEP_COLUMNS[2:]}
        agg = {"trial": -1, "path_index": i}
        agg.update({c: float(v.mean()) for c, v in cols.items()})
        lo, hi = bootstrap_ci(cols["test_loss"], level, resamples, derive_seed(seed, 1 << 20, i))
        agg.update(mean_test=agg["test_loss"], ci_lo=lo, ci_hi=hi, mean_bound=agg["bound_value"])
        out.append(agg)
    return out


@dataclass
class SweepResult:
    """Raw rows keyed by (trial, path_index), their aggregates and reference lines."""

    config: ExperimentConfig
    rows: List[SweepRow]
    aggregate: List[dict]
    null_risk: float
    optimal_risk: float
    elapsed: float = 0.0

    @property
    def nonconverged_fraction(self) -> float:
        if not self.rows:
            return 0.0
        return sum(not r.converged for r in self.rows) / len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def table(self, name: str) -> np.ndarray:
        """(trials, path points) array of one column."""
        T = 1 + max(r.trial for r in self.rows)
        P = 1 + max(r.path_index for r in self.rows)
        out = np.full((T, P), np.nan)
        for r in self.rows:
            out[r.trial, r.path_index] = getattr(r, name)
        return out

    def bound_validity(self) -> float:
        """Fraction of (trial, point) pairs where the bound is at least the test loss."""
        return float(np.mean(self.column("bound_value") >= self.column("test_loss")))

    def to_csv(self, path=None) -> None:
        _write_csv(path, SWEEP_COLUMNS, (r.values() for r in self.rows))

    def aggregate_to_csv(self, path=None) -> None:
        _write_csv(path, AGGREGATE_COLUMNS, ([a[c] for c in AGGREGATE_COLUMNS] for a in self.aggregate))

    def meta(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "null_risk": self.null_risk,
            "optimal_risk": self.optimal_risk,
            "rows": len(self.rows),
            "nonconverged_rows": sum(not r.converged for r in self.rows),
        }

    def write(self, prefix) -> Tuple[str, str, str]:
        """Write ``prefix.csv``, ``prefix_aggregate.csv`` and ``prefix.json``."""
        paths = (f"{prefix}.csv", f"{prefix}_aggregate.csv", f"{prefix}.json")
        self.to_csv(paths[0])
        self.aggregate_to_csv(paths[1])
        with open(paths[2], "w") as fh:
            json.dump(self.meta(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths


def read_rows(path) -> List[SweepRow]:
    """Load sweep rows back from CSV (convergence flags are not stored)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(SweepRow(int(rec["trial"]), int(rec["path_index"]),
                                 *(float(rec[c]) for c in SWEEP_COLUMNS[2:])))
    return rows


def regpath_to_csv(path: RegPath, out=None) -> None:
    """One row per path point: penalty, intercept, losses, norms and coefficients."""
    d = path.coefs.shape[1]
    header = ["path_index", "reg_value", "intercept", "train_loss", "norm_l1", "norm_l2", "converged",
              "iterations"] + [f"w_{j + 1}" for j in range(d)]
    rows = []
    for i in range(len(path)):
        rows.append([i, path.reg_values[i], path.intercepts[i], path.train_losses[i], path.norms_l1[i],
                     path.norms_l2[i], int(bool(path.converged[i])), int(path.iterations[i])] + list(path.coefs[i]))
    _write_csv(out, header, rows)


# --- one path sweep --------------------------------------------------------

@dataclass
class _Context:
    cfg: ExperimentConfig
    model: DataModel
    split: object
    trace_perp: float
    moments: object
    bound_kind: str


def _resolve_bound(cfg: ExperimentConfig) -> str:
    if cfg.bound != "auto":
        return cfg.bound
    if cfg.test_loss == "zero_one":
        return "pop_sq_hinge"
    if cfg.fitter == "constrained_l2":
        return "psi"
    if cfg.fitter in ("lasso", "sq_hinge_l1"):
        return "rademacher"
    return "isotropic" if cfg.covariance == "isotropic" else "ball"


def _context(cfg: ExperimentConfig) -> _Context:
    model = build_model(cfg)
    split = build_cov_split(model.multi_index().wstars, model.cov.eigs)
    moments = None
    if cfg.labels == "misspecified":
        e = model.cov.eigs
        moments = (moment_table(cfg.features, math.sqrt(e[0])), moment_table(cfg.features, math.sqrt(e[1])))
    return _Context(cfg, model, split, split.trace_perp, moments, _resolve_bound(cfg))


def _l1_sq_hinge_grid(X, y, m, lo, hi, fit_intercept):
    # smallest l1 penalty that keeps w = 0, at the best intercept-only fit
    p = float(np.mean(y > 0))
    b = 2.0 * p - 1.0 if fit_intercept else 0.0
    g = X.T @ (y * np.maximum(1.0 - y * b, 0.0)) * (2.0 / y.size)
    amax = float(np.max(np.abs(g))) or 1.0
    return amax * np.logspace(math.log10(hi), math.log10(lo), m)


def fit_path(cfg: ExperimentConfig, X, y) -> RegPath:
    m = int(cfg.grid_size)
    icpt = cfg.intercept
    if cfg.fitter in ("ridge", "sq_hinge_l2"):
        lo, hi = cfg.grid_lo or 1e-7, cfg.grid_hi or 1e2
        grid = cfg.grid if cfg.grid is not None else default_ridge_grid(X, m, lo, hi)
        if cfg.fitter == "ridge":
            path = ridge_path(X, y, grid, icpt)
            if cfg.interpolator:
                fit = min_norm_least_squares(X, y, icpt)
                path = path.append(_single(fit))
            return path
        return sq_hinge_path(X, y, grid, "l2", icpt, tol=cfg.tol or 1e-6)
    if cfg.fitter == "lasso":
        lo = cfg.grid_lo or 1e-4
        grid = cfg.grid if cfg.grid is not None else default_lasso_grid(X, y, m, lo, icpt)
        path = lasso_path(X, y, grid, icpt, tol=cfg.tol or 1e-7)
        if cfg.interpolator:
            path = path.append(_single(min_l1_interpolator(X, y, fit_intercept=icpt)))
        return path
    if cfg.fitter == "sq_hinge_l1":
        lo, hi = cfg.grid_lo or 1e-4, cfg.grid_hi or 1.0
        grid = cfg.grid if cfg.grid is not None else _l1_sq_hinge_grid(X, y, m, lo, hi, icpt)
        return sq_hinge_path(X, y, grid, "l1", icpt, tol=cfg.tol or 1e-6)
    return _constrained_path(cfg, X, y)


def _single(fit, reg_value: float = 0.0) -> RegPath:
    return RegPath(np.array([reg_value]), fit.w[None, :], np.array([fit.b]), np.array([fit.train_loss]),
                   np.array([fit.converged]), np.array([fit.iterations]))


def _constrained_path(cfg: ExperimentConfig, X, y) -> RegPath:
    """Square-loss ERM over growing l2 balls, ending at the unconstrained least-squares fit."""
    icpt = cfg.intercept
    ols = min_norm_least_squares(X, y, icpt)
    top = ols.norm_l2
    m = int(cfg.grid_size)
    if cfg.grid is not None:
        radii = np.sort(np.asarray(cfg.grid, dtype=float))
    else:
        lo = cfg.grid_lo or 1.0 / m
        radii = top * np.linspace(lo, 1.0, m)
    fits, w0 = [], None
    for B in radii:
        if B >= top:
            fit = ols
        else:
            fit = constrained_erm(X, y, Square(), ("l2", float(B)), icpt, tol=cfg.tol or 1e-8, w0=w0)
        w0 = fit.w
        fits.append(fit)
    return RegPath(radii, np.vstack([f.w for f in fits]), np.array([f.b for f in fits]),
                   np.array([f.train_loss for f in fits]), np.array([f.converged for f in fits]),
                   np.array([f.iterations for f in fits]))


def _test_losses(ctx: _Context, path: RegPath, seed) -> np.ndarray:
    cfg, model = ctx.cfg, ctx.model
    W, b = path.coefs, path.intercepts
    if cfg.test_loss == "zero_one":
        return np.array([zero_one_risk(w, bi, model, method="quad").value for w, bi in zip(W, b)])
    if model.classification:
        return np.atleast_1d(classification_pop_sq_hinge(W, b, model, cfg.n_mc, seed, cfg.oracle_method).value)
    return np.atleast_1d(regression_pop_risk(W, b, model, ctx.moments, n_mc=cfg.n_mc, seed=seed).value)


def _bounds(ctx: _Context, X, path: RegPath, test, seed) -> np.ndarray:
    cfg, split = ctx.cfg, ctx.split
    kind = ctx.bound_kind
    n, d = X.shape
    W = path.coefs
    L = path.train_losses
    m = len(path)
    if kind == "none":
        return np.full(m, np.nan)
    if kind == "pop_sq_hinge":
        return np.atleast_1d(classification_pop_sq_hinge(W, path.intercepts, ctx.model, method="quad").value)
    QW = W @ split.Q.T
    if kind == "psi":
        rsq = np.sum((QW @ split.Sigma) * QW, axis=1)
        return np.array([summary_functional_psi(t, r * d / n) for t, r in zip(test, rsq)])
    if kind == "ball":
        C = np.linalg.norm(W, axis=1) * math.sqrt(ctx.trace_perp)
    elif kind == "ball_delta":
        C = np.array([c_delta_ball(nw, split.SigmaPerp, cfg.delta) for nw in np.linalg.norm(W, axis=1)])
    elif kind == "isotropic":
        C = math.sqrt(d) * np.linalg.norm(QW, axis=1)
    else:  # rademacher
        iso = cfg.covariance == "isotropic"
        norms = np.abs(QW).sum(axis=1) if iso else np.abs(W).sum(axis=1)
        XQ = X if iso else X @ split.Q
        rad = np.array([rademacher_linf_mc(XQ, None, cfg.b_reps, derive_seed(seed, i)) for i in range(m)])
        C = math.sqrt(n) * norms * rad
    return np.array([optimistic_bound(l, c, n, cfg.correction) for l, c in zip(L, C)])


def _run_trial(ctx: _Context, t: int) -> List[SweepRow]:
    cfg = ctx.cfg
    ds = ctx.model.sample(cfg.n, derive_seed(cfg.seed, t, 0))
    path = fit_path(cfg, ds.X, ds.y)
    test = _test_losses(ctx, path, derive_seed(cfg.seed, t, 1))
    bound = _bounds(ctx, ds.X, path, test, derive_seed(cfg.seed, t, 2))
    l1, l2 = path.norms_l1, path.norms_l2
    return [SweepRow(t, i, float(path.reg_values[i]), float(path.train_losses[i]), float(test[i]), float(bound[i]),
                     float(l1[i]), float(l2[i]), bool(path.converged[i])) for i in range(len(path))]


def _reference_lines(ctx: _Context) -> Tuple[float, float]:
    cfg, model = ctx.cfg, ctx.model
    icpt = cfg.intercept
    if cfg.test_loss == "zero_one":
        p = 0.5 * (1.0 + math.sqrt(1.0 - classification_null_risk(model)))
        null = min(p, 1.0 - p) if icpt else 0.5
        return null, bayes_zero_one_risk(model)
    if model.classification:
        if model.features.kind is not FeatureKind.GAUSSIAN:
            return math.nan, math.nan
        null = classification_null_risk(model) if icpt else 1.0
        return null, _optimal_linear_sq_hinge(model, icpt)
    null = regression_null_risk(model, with_intercept=icpt)
    lab = model.labels
    if isinstance(lab, WellSpecifiedLinear):
        return null, lab.sigma_sq
    w, risk = misspecified_optimal_predictor(model, ctx.moments)
    if icpt:
        ey = ctx.moments[0].m_abs * ctx.moments[1].m_cos
        risk -= ey * ey
    return null, risk


def _optimal_linear_sq_hinge(model: DataModel, fit_intercept: bool) -> float:
    # the optimum lies in span(w*) by Jensen; search (scale, intercept) on the reduction
    ws = model.multi_index().wstars[0]
    u = ws / math.sqrt(float(np.sum(ws * ws * model.cov.eigs)))

    def risk(z):
        b = z[1] if fit_intercept else 0.0
        return classification_pop_sq_hinge(z[0] * u, b, model, method="quad").value

    res = optimize.minimize(risk, np.array([1.0, 0.0]), method="Nelder-Mead",
                            options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 2000})
    return float(res.fun)


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Run every trial of ``cfg`` and aggregate; see the module docstring for seeding."""
    cfg.validate()
    t0 = time.perf_counter()
    if cfg.experiment == "sharpness":
        rows = _sharpness_rows(cfg)
        null = opt = cfg.sigma * math.sqrt(2.0 / math.pi)
    else:
        ctx = _context(cfg)
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                chunks = list(pool.map(lambda t: _run_trial(ctx, t), range(cfg.trials)))
        else:
            chunks = [_run_trial(ctx, t) for t in range(cfg.trials)]
        rows = [r for c in chunks for r in c]
        null, opt = _reference_lines(ctx)
    rows.sort(key=lambda r: (r.trial, r.path_index))
    agg = aggregate_rows(rows, seed=cfg.seed)
    return SweepResult(cfg, rows, agg, float(null), float(opt), time.perf_counter() - t0)


# --- sharpness of the Lipschitz bound for the L1 loss ----------------------

def _mean_abs_minus(s, sigma):
    """E| |R| - sigma | for R ~ N(0, s^2)."""
    if s == 0:
        return sigma
    a = sigma / s
    inside = 2.0 * (sigma * (stats.norm.cdf(a) - 0.5) - s * (stats.norm.pdf(0.0) - stats.norm.pdf(a)))
    return s * math.sqrt(2.0 / math.pi) - sigma + 2.0 * inside


def _expected_ratio(rho, n, dj):
    lam = math.sqrt(n)
    free = max(dj - n - 1.0, 1.0)
    s2 = 1.0 + rho * rho
    test = math.sqrt(2.0 / math.pi) * math.sqrt(s2 + n / free)
    gap = test - _mean_abs_minus(math.sqrt(s2), 1.0)
    norm_sq = rho * rho + n * dj / (lam * free)
    return gap / math.sqrt(norm_sq * (1.0 + lam) / n)


def sharpness_radius(n: int, dJ_factor: float = 20.0, sigma: float = 1.0) -> float:
    """First-coordinate weight r of the construction, chosen before seeing data.

    The construction is scale equivariant, so r = sigma * rho where rho
    maximizes the expected gap-to-bound ratio at this (n, d_J).
    """
    dj = int(round(dJ_factor * n))
    res = optimize.minimize_scalar(lambda rho: -_expected_ratio(rho, n, dj), bounds=(0.0, 20.0), method="bounded",
                                   options={"xatol": 1e-6})
    return float(sigma * res.x)


def run_sharpness_l1(n: int, dJ_factor: float = 20.0, sigma: float = 1.0, seed=0, r: Optional[float] = None) -> dict:
    """Gap and Lipschitz bound of the sign-fitting predictor on pure-noise labels.

    x = (x_1, x_J) with x_1 ~ N(0, 1), x_J ~ N(0, (lam/d_J) I), lam = sqrt(n),
    and y ~ N(0, sigma^2) independent of x.  The predictor is (r, w_J) with
    w_J the least-norm solution of <w_J, x_iJ> = sigma sgn(y_i - r x_i1).
    ``bound`` is the gap bound ||w|| sqrt(Tr Sigma / n); ``ratio`` = gap/bound.
    """
    if dJ_factor < 1:
        raise ValueError("dJ_factor must be at least 1")
    n = int(n)
    dj = int(round(dJ_factor * n))
    lam = math.sqrt(n)
    r = sharpness_radius(n, dJ_factor, sigma) if r is None else float(r)
    eigs = np.concatenate([[1.0], np.full(dj, lam / dj)])
    e1 = np.zeros(1 + dj)
    e1[0] = 1.0
    labels = MultiIndex(e1, lambda eta, xi: xi, lambda rng, m: sigma * rng.standard_normal(m))
    ds = DataModel(FeatureDistribution(FeatureKind.GAUSSIAN), ExplicitDiagonal(eigs), labels).sample(n, seed)
    X, y = ds.X, ds.y
    t = sigma * np.sign(y - r * X[:, 0])
    XJ = X[:, 1:]
    wJ = XJ.T @ np.linalg.solve(XJ @ XJ.T, t)
    w = np.concatenate([[r], wJ])
    train = float(np.mean(np.abs(y - X @ w)))
    # the test residual is exactly Gaussian given w
    test = math.sqrt(2.0 / math.pi) * math.sqrt(sigma**2 + r**2 + lam / dj * float(wJ @ wJ))
    norm = float(np.linalg.norm(w))
    full = lipschitz_bound(train, 1.0, norm * math.sqrt(1.0 + lam), n)
    gap_bound = full - train
    gap = test - train
    ratio = gap / gap_bound if gap_bound > 0 else math.nan
    return {"n": n, "d_J": dj, "r": r, "train_loss": train, "test_loss": test, "gap": gap, "bound": gap_bound,
            "bound_value": full, "ratio": ratio, "norm_l1": float(np.abs(w).sum()), "norm_l2": norm}


def _sharpness_rows(cfg: ExperimentConfig) -> List[SweepRow]:
    radii = [sharpness_radius(m, cfg.dj_factor, cfg.sigma) for m in cfg.ns]

    def trial(t):
        out = []
        for j, m in enumerate(cfg.ns):
            rec = run_sharpness_l1(m, cfg.dj_factor, cfg.sigma, derive_seed(cfg.seed, t, j), r=radii[j])
            out.append(SweepRow(t, j, float(m), rec["train_loss"], rec["test_loss"], rec["bound_value"],
                                rec["norm_l1"], rec["norm_l2"]))
        return out

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(trial, range(cfg.trials)))
    else:
        chunks = [trial(t) for t in range(cfg.trials)]
    return [r for c in chunks for r in c]


def sharpness_summary(result: SweepResult, level: float = 0.95, resamples: int = 1000) -> List[dict]:
    """Per-n ratio of mean gap to mean gap bound, with a paired bootstrap interval."""
    out = []
    T = result.table
    train, test, bound = T("train_loss"), T("test_loss"), T("bound_value")
    ns = T("reg_value")[0]
    for j in range(train.shape[1]):
        gap = test[:, j] - train[:, j]
        gb = bound[:, j] - train[:, j]
        ratio = float(gap.mean() / gb.mean())
        if gap.size > 1:
            ci = stats.bootstrap((gap, gb), lambda a, b, axis=-1: a.mean(axis=axis) / b.mean(axis=axis),
                                 paired=True, vectorized=True, n_resamples=resamples, confidence_level=level,
                                 method="percentile", random_state=np.random.default_rng(derive_seed(0, j)))
            lo, hi = float(ci.confidence_interval.low), float(ci.confidence_interval.high)
        else:
            lo = hi = ratio
        out.append({"n": int(ns[j]), "gap": float(gap.mean()), "bound": float(gb.mean()), "ratio": ratio,
                    "ci_lo": min(lo, ratio), "ci_hi": max(hi, ratio)})
    return out
