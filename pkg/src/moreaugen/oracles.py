"""Population quantities used as ground truth.

Square-loss risks have a closed form once a few one-dimensional moments of
the coordinate distribution are known.  Squared-hinge and zero-one risks for
Gaussian features reduce to the two-dimensional law of (<w*, x>, <w, x>).
"""
from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import integrate, stats
from scipy.special import expit, ndtr

from .envelope import LossSpec, Square, SquaredHinge, ZeroOne, loss_value
from .fitters import one_pass_sgd_1d
from .synthdata import (
    DataModel,
    FeatureDistribution,
    FeatureKind,
    LogisticClassification,
    MisspecifiedRegression,
    SignClassification,
    WellSpecifiedLinear,
    derive_seed,
)

__all__ = [
    "PopulationRisk",
    "MomentTable",
    "HeavyTailWarning",
    "expectation",
    "moment_table",
    "regression_pop_risk",
    "misspecified_optimal_predictor",
    "regression_null_risk",
    "classification_pop_sq_hinge",
    "zero_one_risk",
    "bayes_zero_one_risk",
    "classification_null_risk",
    "optimal_classifier",
    "mc_pop_risk",
    "hypercontractivity_ratio",
    "gaussian_partial_sq",
]


class HeavyTailWarning(UserWarning):
    """A Monte Carlo moment estimate has not stabilized."""


@dataclass
class PopulationRisk:
    value: float
    method: str
    std_error: float = 0.0


# --- one-dimensional moments -----------------------------------------------

_E = math.e


def expectation(kind, g, scale: float = 1.0) -> float:
    """E g(scale * z) for a standardized coordinate z, by quadrature or exact sums."""
    kind = FeatureKind(kind)
    s = float(scale)
    quad = lambda f, a, b, pts=None: integrate.quad(f, a, b, points=pts, limit=1000, epsabs=1e-13, epsrel=1e-12)[0]
    if kind is FeatureKind.RADEMACHER:
        return 0.5 * (g(s) + g(-s))
    if kind is FeatureKind.POISSON_CENTERED:
        ks = np.arange(60)
        pm = stats.poisson.pmf(ks, 1.0)
        return float(sum(p * g(s * (k - 1.0)) for k, p in zip(ks, pm)))
    if kind is FeatureKind.GAUSSIAN:
        f = lambda u: g(s * u) * math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        return quad(f, -12, 0) + quad(f, 0, 12)
    if kind is FeatureKind.UNIFORM:
        r3 = math.sqrt(3.0)
        f = lambda u: g(s * u) / (2 * r3)
        return quad(f, -r3, 0) + quad(f, 0, r3)
    if kind is FeatureKind.LAPLACE:
        bb = 1.0 / math.sqrt(2.0)
        f = lambda u: g(s * u) * math.exp(-abs(u) / bb) / (2 * bb)
        return quad(f, -60 * bb, 0) + quad(f, 0, 60 * bb)
    if kind is FeatureKind.STUDENT_T5:
        c = math.sqrt(3.0 / 5.0)
        k5 = 8.0 / (3.0 * math.sqrt(5.0) * math.pi)
        f = lambda u: g(s * u) * k5 / (1.0 + (u / c) ** 2 / 5.0) ** 3 / c
        return sum(quad(f, a, b) for a, b in [(-np.inf, -50), (-50, 0), (0, 50), (50, np.inf)])
    if kind is FeatureKind.WEIBULL_HALF:
        # z = (E^2 - 2) / sqrt(20) with E ~ Exp(1)
        f = lambda e: g(s * (e * e - 2.0) / math.sqrt(20.0)) * math.exp(-e)
        return quad(f, 0, math.sqrt(2.0)) + quad(f, math.sqrt(2.0), 10) + quad(f, 10, 80)
    if kind is FeatureKind.LOGNORMAL:
        c = math.sqrt(_E * (_E - 1.0))
        f = lambda u: g(s * (math.exp(u) - math.sqrt(_E)) / c) * math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        return sum(quad(f, a, b) for a, b in [(-12, 0.5), (0.5, 3), (3, 6), (6, 9), (9, 12)])
    raise AssertionError(kind)


@dataclass(frozen=True)
class MomentTable:
    """Moments of x = scale * z for one coordinate distribution."""

    kind: str
    scale: float
    m_abs: float  # E|x|
    m_sgn: float  # E[x |x|]
    m_cos: float  # E cos x
    m_zcos: float  # E[x cos x]
    m_cos2: float  # E cos^2 x
    method: str = "quad"
    mc_samples: int = 0
    seed: int = 0


_MOMENT_FUNCS = {
    "m_abs": np.abs,
    "m_sgn": lambda x: x * np.abs(x),
    "m_cos": np.cos,
    "m_zcos": lambda x: x * np.cos(x),
    "m_cos2": lambda x: np.cos(x) ** 2,
}


def _gaussian_moments(s):
    return {
        "m_abs": s * math.sqrt(2.0 / math.pi),
        "m_sgn": 0.0,
        "m_cos": math.exp(-0.5 * s * s),
        "m_zcos": 0.0,
        "m_cos2": 0.5 * (1.0 + math.exp(-2.0 * s * s)),
    }


def _cache_key(kind, scale, method, mc_samples, seed):
    return f"{kind}|{scale:.17g}|{method}|{mc_samples}|{seed}"


def moment_table(kind, scale: float = 1.0, method: str = "quad", mc_samples: int = 10_000_000, seed: int = 0,
                 cache_path: Optional[str] = None) -> MomentTable:
    """Moments for the misspecified-model oracle.

    ``method="quad"`` integrates against the exact density (Gaussian values are
    analytic); ``"mc"`` averages ``mc_samples`` draws in chunks.  Results can be
    cached in a JSON file keyed by (distribution, scale, method, samples, seed).
    """
    kind = FeatureKind(kind)
    key = _cache_key(kind.value, scale, method, mc_samples if method == "mc" else 0, seed if method == "mc" else 0)
    cache = {}
    if cache_path and os.path.exists(cache_path):
        with open(cache_path) as fh:
            cache = json.load(fh)
        if key in cache:
            return MomentTable(**cache[key])
    if method == "quad":
        if kind is FeatureKind.GAUSSIAN:
            vals = _gaussian_moments(scale)
        else:
            vals = {k: float(expectation(kind, f, scale)) for k, f in _MOMENT_FUNCS.items()}
        table = MomentTable(kind.value, float(scale), method="quad", **vals)
    elif method == "mc":
        rng = np.random.default_rng(seed)
        dist = FeatureDistribution(kind)
        sums = dict.fromkeys(_MOMENT_FUNCS, 0.0)
        left = int(mc_samples)
        while left > 0:
            m = min(left, 1_000_000)
            x = scale * dist.sample(rng, m)
            for k, f in _MOMENT_FUNCS.items():
                sums[k] += float(np.sum(f(x)))
            left -= m
        vals = {k: v / mc_samples for k, v in sums.items()}
        table = MomentTable(kind.value, float(scale), method="mc", mc_samples=int(mc_samples), seed=int(seed), **vals)
    else:
        raise ValueError(f"unknown method {method!r}")
    if cache_path:
        cache[key] = asdict(table)
        tmp = cache_path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(cache, fh, indent=1, sort_keys=True)
        os.replace(tmp, cache_path)
    return table


# --- regression ------------------------------------------------------------

def _diag_sigma(model: DataModel) -> np.ndarray:
    if not model.cov.is_diagonal:
        raise NotImplementedError("closed form needs independent coordinates (diagonal Sigma)")
    return model.cov.eigs


def misspecified_optimal_predictor(model: DataModel, moments=None, method: str = "quad"):
    """(w_tilde, L(w_tilde)) for the misspecified regression model.

    ``moments`` may be a pair of MomentTable for (x1, x2); by default they are
    computed at the scales sqrt(Sigma_11), sqrt(Sigma_22).
    """
    w, risk, _ = _misspecified_parts(model, moments, method)
    return w, risk


def _misspecified_parts(model, moments, method):
    lab = model.labels
    if not isinstance(lab, MisspecifiedRegression):
        raise TypeError("expected a MisspecifiedRegression label model")
    eigs = _diag_sigma(model)
    if np.any(eigs[:3] <= 0):
        raise ValueError("Sigma is singular on the first three coordinates")
    if moments is None:
        kind = model.features.kind
        moments = (moment_table(kind, math.sqrt(eigs[0]), method), moment_table(kind, math.sqrt(eigs[1]), method))
    m1, m2 = moments
    d = model.d
    w = lab.wstar_vector(d)
    w[0] += m1.m_sgn * m2.m_cos / eigs[0]
    w[1] += m1.m_abs * m2.m_zcos / eigs[1]
    risk = (eigs[0] * m2.m_cos2 + eigs[2] * lab.sigma_sq
            - (m1.m_sgn * m2.m_cos) ** 2 / eigs[0] - (m1.m_abs * m2.m_zcos) ** 2 / eigs[1])
    return w, float(risk), m1.m_abs * m2.m_cos


def regression_pop_risk(w, b, model: DataModel, moments=None, method: str = "quad", n_mc: int = 1_000_000,
                        seed=0) -> PopulationRisk:
    """Square-loss risk E(y - <w, x> - b)^2.

    Uses L(w) = L(w_tilde) + ||w - w_tilde||_Sigma^2 (plus the intercept
    terms).  ``w`` may be a single vector or a stack of them, with ``b``
    matching.  Unsupported models fall back to Monte Carlo.
    """
    lab = model.labels
    try:
        eigs = _diag_sigma(model)
        if isinstance(lab, WellSpecifiedLinear):
            wt, base, ey = lab.wstar_vector(model.d), lab.sigma_sq, 0.0
        elif isinstance(lab, MisspecifiedRegression):
            wt, base, ey = _misspecified_parts(model, moments, method)
        else:
            raise NotImplementedError
    except NotImplementedError:
        return mc_pop_risk(Square(), w, b, model, n_mc, seed)
    W = np.asarray(w, dtype=float)
    bb = np.asarray(b, dtype=float)
    diff = W - wt
    val = base + np.sum(diff * diff * eigs, axis=-1) - 2.0 * bb * ey + bb * bb
    return PopulationRisk(val if np.ndim(val) else float(val), "closed_form", 0.0)


def regression_null_risk(model: DataModel, with_intercept: bool = False, method: str = "quad") -> float:
    """Risk of the zero predictor (or the best constant when ``with_intercept``)."""
    lab = model.labels
    if isinstance(lab, WellSpecifiedLinear):
        w = lab.wstar_vector(model.d)
        return float(np.sum(w * w * _diag_sigma(model)) + lab.sigma_sq)
    zero = np.zeros(model.d)
    risk0 = regression_pop_risk(zero, 0.0, model, method=method).value
    if not with_intercept:
        return risk0
    _, _, ey = _misspecified_parts(model, None, method)
    return risk0 - ey * ey


# --- classification (Gaussian features) ------------------------------------

def _link(model: DataModel):
    """(wstar, bstar, P(y = 1 | eta)) for the supported single-index classifiers."""
    lab = model.labels
    d = model.d
    if isinstance(lab, LogisticClassification):
        return lab.wstar_vector(d), lab.bstar, expit
    if isinstance(lab, SignClassification):
        p = lab.flip
        return lab.wstar_vector(d), 0.0, lambda eta: np.where(eta >= 0, 1.0 - p, p)
    raise NotImplementedError("no two-dimensional reduction for this label model")


def _reduction(w, b, model):
    ws, bs, g = _link(model)
    S = model.cov.matrix() if not model.cov.is_diagonal else None
    if S is None:
        e = model.cov.eigs
        s2 = float(np.sum(ws * ws * e))
        c = np.asarray(w, dtype=float) @ (ws * e)
        q = np.sum(np.asarray(w, dtype=float) ** 2 * e, axis=-1)
    else:
        s2 = float(ws @ S @ ws)
        c = np.asarray(w, dtype=float) @ (S @ ws)
        q = np.einsum("...i,ij,...j->...", w, S, w)
    slope = c / s2
    var = np.maximum(q - c * c / s2, 0.0)
    return slope, np.asarray(b, dtype=float), np.sqrt(var), bs, math.sqrt(s2), g


_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _pdf(t: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * t * t)


def _cdf(t: float) -> float:
    return 0.5 * math.erfc(-t / math.sqrt(2.0))


def gaussian_partial_sq(a, sigma):
    """E (a - sigma Z)_+^2 for Z ~ N(0, 1)."""
    a = np.asarray(a, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = a / sigma
        val = (a * a + sigma * sigma) * ndtr(t) + a * sigma * _INV_SQRT_2PI * np.exp(-0.5 * t * t)
    return np.where(sigma > 0, val, np.maximum(a, 0.0) ** 2)


def _partial_sq(a: float, sigma: float) -> float:
    # scalar version for quadrature integrands
    if sigma <= 0:
        return max(a, 0.0) ** 2
    t = a / sigma
    return (a * a + sigma * sigma) * _cdf(t) + a * sigma * _pdf(t)


def classification_pop_sq_hinge(w, b, model: DataModel, n_mc: int = 1_000_000, seed=0,
                                method: str = "mc") -> PopulationRisk:
    """Squared-hinge risk through the law of (eta, <w, x> + b) for Gaussian x.

    Given eta = <w*, x> + b*, the score is N(mu(eta), sigma^2) with
    mu = b + <w, Sigma w*> / ||w*||_Sigma^2 (eta - b*).  ``method="mc"`` draws
    (eta, z) pairs (the same draws for every predictor in a stack);
    ``"quad"`` integrates z exactly and eta by adaptive quadrature.
    """
    if model.features.kind is not FeatureKind.GAUSSIAN:
        return mc_pop_risk(SquaredHinge(), w, b, model, n_mc, seed)
    slope, bb, sig, bs, s, g = _reduction(w, b, model)
    W = np.atleast_1d(slope)
    Bv = np.broadcast_to(np.atleast_1d(bb), W.shape)
    Sg = np.atleast_1d(sig)
    scalar = np.ndim(slope) == 0
    if method == "mc":
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(n_mc)
        z = rng.standard_normal(n_mc)
        p = g(bs + s * u)
        vals, ses = np.empty(W.size), np.empty(W.size)
        for i in range(W.size):
            score = Bv[i] + W[i] * s * u + Sg[i] * z
            f = p * np.maximum(1.0 - score, 0.0) ** 2 + (1.0 - p) * np.maximum(1.0 + score, 0.0) ** 2
            vals[i] = f.mean()
            ses[i] = f.std(ddof=1) / math.sqrt(n_mc)
        out = (vals[0], ses[0]) if scalar else (vals, ses)
        return PopulationRisk(float(out[0]) if scalar else out[0], "two_dim_reduction", out[1])
    if method == "quad":
        vals = np.empty(W.size)
        for i in range(W.size):
            def f(u, i=i):
                mu = Bv[i] + W[i] * s * u
                pp = g(bs + s * u)
                pp = float(pp)
                return (pp * _partial_sq(1.0 - mu, Sg[i]) + (1.0 - pp) * _partial_sq(1.0 + mu, Sg[i])) * _pdf(u)
            vals[i] = _quad_u(f, _kinks(W[i], Bv[i], Sg[i], s, bs, model))
        return PopulationRisk(float(vals[0]) if scalar else vals, "two_dim_reduction", 0.0)
    raise ValueError(f"unknown method {method!r}")


def _kinks(slope, b, sig, s, bs, model):
    pts = []
    if isinstance(model.labels, SignClassification):
        pts.append(-bs / s)
    if sig == 0 and slope != 0:
        for a in (1.0, -1.0, 0.0):
            pts.append((a - b) / (slope * s))
    return [p for p in pts if -12 < p < 12]


def _quad_u(f, pts):
    edges = sorted(set([-12.0, 12.0] + list(pts)))
    return float(sum(integrate.quad(f, a, c, limit=500, epsabs=1e-12, epsrel=1e-10)[0]
                     for a, c in zip(edges[:-1], edges[1:])))


def zero_one_risk(w, b, model: DataModel, method: str = "quad", n_mc: int = 1_000_000, seed=0) -> PopulationRisk:
    """P(sign(<w, x> + b) != y), counting a zero score as an error."""
    if model.features.kind is not FeatureKind.GAUSSIAN or method == "mc_direct":
        return mc_pop_risk(ZeroOne(), w, b, model, n_mc, seed)
    slope, bb, sig, bs, s, g = _reduction(w, b, model)
    slope, bb, sig = float(slope), float(bb), float(sig)

    def err(u):
        mu = bb + slope * s * u
        pp = g(bs + s * u)
        if sig > 0:
            return pp * ndtr(-mu / sig) + (1.0 - pp) * ndtr(mu / sig)
        return np.where(mu > 0, 1.0 - pp, np.where(mu < 0, pp, 1.0))

    if method == "quad":
        f = lambda u: float(err(u)) * _pdf(u)
        return PopulationRisk(_quad_u(f, _kinks(slope, bb, sig, s, bs, model)), "two_dim_reduction", 0.0)
    if method == "mc":
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(n_mc)
        e = err(u)
        return PopulationRisk(float(e.mean()), "two_dim_reduction", float(e.std(ddof=1) / math.sqrt(n_mc)))
    raise ValueError(f"unknown method {method!r}")


def bayes_zero_one_risk(model: DataModel) -> float:
    """E min(g(eta), 1 - g(eta)) by adaptive quadrature over eta."""
    ws, bs, g = _link(model)
    s = math.sqrt(float(np.sum(ws * ws * model.cov.eigs)) if model.cov.is_diagonal
                  else float(ws @ model.cov.matrix() @ ws))
    f = lambda u: float(min(g(bs + s * u), 1.0 - g(bs + s * u))) * _pdf(u)
    return _quad_u(f, [-bs / s])


def classification_null_risk(model: DataModel) -> float:
    """min over b of E max(0, 1 - y b)^2 = 4 p (1 - p), with p = P(y = 1)."""
    ws, bs, g = _link(model)
    s = math.sqrt(float(np.sum(ws * ws * model.cov.eigs)))
    p = _quad_u(lambda u: float(g(bs + s * u)) * _pdf(u), [-bs / s])
    return 4.0 * p * (1.0 - p)


def optimal_classifier(model: DataModel, n_steps: int = 2_000_000, step0: float = 0.1, seed=0):
    """Optimal linear squared-hinge predictor for a single-index Gaussian model.

    Only the first coordinate can carry weight, so one-pass SGD on (x1, y)
    finds (w1, b).  Returns (w, b, risk) with the risk from the reduction.
    """
    ws, bs, g = _link(model)
    if np.count_nonzero(ws) != 1 or ws[0] == 0 or not model.cov.is_diagonal:
        raise NotImplementedError("expects w* along the first coordinate of a diagonal covariance")
    sd = math.sqrt(model.cov.eigs[0])
    w1 = ws[0]

    def sampler(rng, m):
        x = sd * rng.standard_normal(m)
        y = np.where(rng.random(m) < g(w1 * x + bs), 1.0, -1.0)
        return x, y

    a, c = one_pass_sgd_1d(sampler, (0.0, 0.0), step0, n_steps, seed)
    w = np.zeros(model.d)
    w[0] = a
    return w, c, float(classification_pop_sq_hinge(w, c, model, method="quad").value)


# --- generic Monte Carlo ---------------------------------------------------

def _mc_chunks(model: DataModel, n_mc: int, seed, chunk_elems: int = 20_000_000):
    rows = max(1, min(n_mc, chunk_elems // max(model.d, 1)))
    left, i = int(n_mc), 0
    while left > 0:
        m = min(rows, left)
        ds = model.sample(m, derive_seed(seed, i))
        yield ds.X, ds.y
        left -= m
        i += 1


def mc_pop_risk(loss: LossSpec, w, b, model: DataModel, n_mc: int = 1_000_000, seed=0) -> PopulationRisk:
    """Fresh-sample Monte Carlo estimate of E f(<w, x> + b, y) with its standard error."""
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    W = np.atleast_2d(np.asarray(w, dtype=float))
    Bv = np.broadcast_to(np.atleast_1d(np.asarray(b, dtype=float)), (W.shape[0],))
    s1 = np.zeros(W.shape[0])
    s2 = np.zeros(W.shape[0])
    for X, y in _mc_chunks(model, n_mc, seed):
        F = np.asarray(loss_value(loss, X @ W.T + Bv, y[:, None]))
        s1 += F.sum(axis=0)
        s2 += (F * F).sum(axis=0)
    mean = s1 / n_mc
    var = np.maximum(s2 / n_mc - mean**2, 0.0) * n_mc / max(n_mc - 1, 1)
    se = np.sqrt(var / n_mc)
    if np.ndim(w) == 1:
        return PopulationRisk(float(mean[0]), "monte_carlo", float(se[0]))
    return PopulationRisk(mean, "monte_carlo", se)


def hypercontractivity_ratio(loss: LossSpec, w, b, model: DataModel, q: int = 4, n_mc: int = 10_000_000, seed=0,
                             chunk: int = 1_000_000) -> float:
    """Norm-equivalence constant of the loss.

    q = 4: (E f^4)^{1/4} / E f.  q = 8: the same quantity written for the
    root loss h = sqrt(f), [(E h^8)^{1/8} / (E h^2)^{1/2}]^2, which puts it on
    the scale of the q = 4 ratio.  Warns when the relative standard error of
    the top moment exceeds 10%.
    """
    if q not in (4, 8):
        raise ValueError("q must be 4 or 8")
    w = np.asarray(w, dtype=float)
    s1 = s4 = s8 = 0.0
    for X, y in _mc_chunks(model, n_mc, seed, chunk_elems=chunk * max(model.d, 1)):
        f = np.asarray(loss_value(loss, X @ w + b, y), dtype=float)
        f2 = f * f
        f4 = f2 * f2
        s1 += float(f.sum())
        s4 += float(f4.sum())
        s8 += float((f4 * f4).sum())
    m1, m4, m8 = s1 / n_mc, s4 / n_mc, s8 / n_mc
    if m1 <= 0:
        raise ValueError("E f must be positive")
    rel_se = math.sqrt(max(m8 - m4 * m4, 0.0) / n_mc) / m4 if m4 > 0 else 0.0
    if rel_se > 0.10:
        warnings.warn(f"fourth-moment estimate has relative SE {rel_se:.2f}", HeavyTailWarning, stacklevel=2)
    if q == 4:
        return m4 ** 0.25 / m1
    # h = sqrt(f): (E h^8)^{1/8} / (E h^2)^{1/2}, squared
    return (m4 ** 0.125 / math.sqrt(m1)) ** 2
