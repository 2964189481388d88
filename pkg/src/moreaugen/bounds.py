"""Covariance splitting, complexity functionals and risk-bound formulas.

Everything here is a plain function of its inputs.  Monte Carlo estimators
take an explicit seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space

from .envelope import optimize_lambda_square_family

__all__ = [
    "CovSplit",
    "BoundReport",
    "BenignConditions",
    "RankDeficientError",
    "build_cov_split",
    "phi",
    "effective_ranks",
    "c_delta_ball",
    "c_simple",
    "c_isotropic",
    "rademacher_linf_mc",
    "vc_correction",
    "optimistic_bound",
    "lipschitz_bound",
    "smooth_interpolator_bound",
    "summary_functional_psi",
    "local_gaussian_width_l2",
    "norm_bound_B2",
    "benign_conditions",
    "ols_psi_excess",
]

DEFAULT_DELTA = 0.05


class RankDeficientError(ValueError):
    """Index directions are linearly dependent in the Sigma geometry."""


@dataclass(eq=False)
class CovSplit:
    """Sigma-orthonormal index directions and the projection that removes them.

    Q = I - sum_i w_i w_i^T Sigma and SigmaPerp = Q^T Sigma Q.
    """

    wstars: np.ndarray  # (k, d)
    Sigma: np.ndarray
    Q: np.ndarray
    SigmaPerp: np.ndarray
    _geom: Optional[tuple] = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.wstars.shape[0]

    @property
    def d(self) -> int:
        return self.Sigma.shape[0]

    @property
    def trace_perp(self) -> float:
        return float(np.trace(self.SigmaPerp))

    @property
    def opnorm_perp(self) -> float:
        return float(np.max(np.linalg.eigvalsh(self.SigmaPerp), initial=0.0))

    def parallel_part(self, w) -> np.ndarray:
        """(I - Q) w, the Sigma-projection of w onto the index span."""
        w = np.asarray(w, dtype=float)
        return w - self.Q @ w

    def geometry(self):
        # orthonormal basis N of range(Q) and eigendecomposition of N^T Sigma N
        if self._geom is None:
            if self.k == 0:
                N = np.eye(self.d)
            else:
                N = null_space(self.wstars @ self.Sigma)
            M = N.T @ self.Sigma @ N
            m, V = np.linalg.eigh(0.5 * (M + M.T))
            self._geom = (N, np.maximum(m, 0.0), V)
        return self._geom


def _as_sigma(Sigma) -> np.ndarray:
    S = np.asarray(Sigma, dtype=float)
    if S.ndim == 1:
        S = np.diag(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("Sigma must be square")
    return S


def build_cov_split(raw_dirs, Sigma) -> CovSplit:
    """Gram-Schmidt the raw directions in the Sigma inner product and build Q."""
    S = _as_sigma(Sigma)
    d = S.shape[0]
    raw = np.asarray(raw_dirs, dtype=float)
    if raw.size == 0:
        raw = np.zeros((0, d))
    raw = np.atleast_2d(raw)
    if raw.shape[1] != d:
        raise ValueError("direction length does not match Sigma")
    W = np.zeros_like(raw)
    for i, v in enumerate(raw):
        u = v.copy()
        scale = math.sqrt(max(float(v @ S @ v), 0.0))
        for _ in range(2):  # second pass for numerical orthogonality
            for j in range(i):
                u -= float(W[j] @ S @ u) * W[j]
        nrm = math.sqrt(max(float(u @ S @ u), 0.0))
        if scale == 0.0 or nrm <= 1e-10 * scale:
            raise RankDeficientError(f"direction {i} is dependent in the Sigma geometry")
        W[i] = u / nrm
    SW = S @ W.T  # (d, k)
    Q = np.eye(d) - W.T @ SW.T
    Sperp = S - SW @ SW.T
    Sperp = 0.5 * (Sperp + Sperp.T)
    return CovSplit(W, S, Q, Sperp)


def phi(split: CovSplit, w) -> np.ndarray:
    """(<w, Sigma w_1*>, ..., <w, Sigma w_k*>, ||Sigma^{1/2} Q w||)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (split.d,):
        raise ValueError("w has the wrong dimension")
    par = split.wstars @ (split.Sigma @ w)
    Qw = split.Q @ w
    r = math.sqrt(max(float(Qw @ split.Sigma @ Qw), 0.0))
    return np.append(par, r)


def effective_ranks(Sigma) -> Tuple[float, float]:
    """(r, R) = (Tr / ||.||_op, Tr^2 / Tr(Sigma^2)); accepts a matrix or its eigenvalues."""
    S = np.asarray(Sigma, dtype=float)
    eigs = S if S.ndim == 1 else np.linalg.eigvalsh(0.5 * (S + S.T))
    eigs = np.maximum(eigs, 0.0)
    tr = float(eigs.sum())
    if tr <= 0:
        raise ValueError("effective ranks of a zero matrix are undefined")
    return tr / float(eigs.max()), tr * tr / float(eigs @ eigs)


def _trace_op(SigmaPerp):
    S = np.asarray(SigmaPerp, dtype=float)
    eigs = S if S.ndim == 1 else np.linalg.eigvalsh(0.5 * (S + S.T))
    eigs = np.maximum(eigs, 0.0)
    return float(eigs.sum()), float(eigs.max(initial=0.0))


def c_delta_ball(norm_w, SigmaPerp, delta: float = DEFAULT_DELTA) -> float:
    """||w|| [sqrt(Tr SigmaPerp) + 2 sqrt(||SigmaPerp||_op log(8/delta))].

    Any delta in (0, 8) keeps the log term real; only (0, 1) is a probability.
    """
    if not 0 < delta < 8:
        raise ValueError("delta must lie in (0, 8)")
    tr, op = _trace_op(SigmaPerp)
    return float(norm_w) * (math.sqrt(tr) + 2.0 * math.sqrt(op * math.log(8.0 / delta)))


def c_simple(norm_w, trace_perp, n) -> float:
    """sqrt(||w||^2 Tr(SigmaPerp) / n), the normalized complexity of the plotted bounds."""
    if n < 1:
        raise ValueError("n must be positive")
    return math.sqrt(float(norm_w) ** 2 * float(trace_perp) / n)


def c_isotropic(norm_Qw, d, n) -> float:
    """sqrt(d / n) ||Qw||, the Cauchy-Schwarz complexity for isotropic data."""
    if n < 1:
        raise ValueError("n must be positive")
    return math.sqrt(d / n) * float(norm_Qw)


def rademacher_linf_mc(X, Q=None, B_reps: int = 300, seed=0) -> float:
    """(1 / (n B)) sum_k ||sum_i s_ki Q^T x_i||_inf with fresh Rademacher signs."""
    X = np.asarray(X, dtype=float)
    if B_reps < 1:
        raise ValueError("B_reps must be positive")
    n = X.shape[0]
    XQ = X if Q is None else X @ np.asarray(Q, dtype=float)
    rng = np.random.default_rng(seed)
    S = 2.0 * rng.integers(0, 2, size=(B_reps, n)).astype(float) - 1.0
    return float(np.abs(S @ XQ).max(axis=1).mean() / n)


def vc_correction(tau, k, n, delta: float = DEFAULT_DELTA, h: Optional[float] = None) -> float:
    """1 - 8 tau sqrt((h (log(2n/h) + 1) + log(48/delta)) / n), with h = k unless given.

    Can be nonpositive, in which case the bound it feeds is vacuous.
    """
    h = k if h is None else h
    if not n > h >= 1:
        raise ValueError("need n > h >= 1")
    if tau < 0 or not 0 < delta < 1:
        raise ValueError("need tau >= 0 and delta in (0, 1)")
    return 1.0 - 8.0 * tau * math.sqrt((h * (math.log(2.0 * n / h) + 1.0) + math.log(48.0 / delta)) / n)


def optimistic_bound(train_loss, C, n, correction: float = 1.0) -> float:
    """(sqrt(L_hat) + C / sqrt(n))^2 / correction; infinite when correction <= 0."""
    if correction > 1:
        raise ValueError("correction must lie in (0, 1]")
    if correction <= 0:
        return math.inf
    return (math.sqrt(max(float(train_loss), 0.0)) + float(C) / math.sqrt(n)) ** 2 / correction


def lipschitz_bound(train_loss, M, C, n) -> float:
    """L_hat + M sqrt(C^2 / n) for an M-Lipschitz loss."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    return float(train_loss) + M * math.sqrt(float(C) ** 2 / n)


def smooth_interpolator_bound(H, C, n) -> float:
    """(H / 2) C^2 / n for an H-smooth loss with zero training error."""
    if H < 0:
        raise ValueError("H must be nonnegative")
    return 0.5 * H * float(C) ** 2 / n


def summary_functional_psi(test_loss_a, complexity_b):
    """(sqrt(a) - sqrt(b))_+^2 with a the test loss and b = C(w)^2 / n."""
    return optimize_lambda_square_family(test_loss_a, complexity_b)


def norm_bound_B2(norm_wsharp_sq, n, trace_perp, L_sharp, rho1=0.0, rho2=0.0) -> float:
    """||w#||^2 + (1 + rho2) (n / Tr SigmaPerp) (L(w#, b#) + rho1)."""
    if trace_perp <= 0:
        raise ValueError("trace_perp must be positive")
    return float(norm_wsharp_sq) + (1.0 + rho2) * n / trace_perp * (L_sharp + rho1)


@dataclass
class BenignConditions:
    c1: float  # n / R(SigmaPerp)
    c2: float  # ||w#||^2 Tr(SigmaPerp) / n
    c3: float  # k / n
    rho2: float
    rho3: float


def benign_conditions(SigmaPerp, n, norm_wsharp_sq, k, delta: float = DEFAULT_DELTA,
                      rho2: Optional[float] = None) -> BenignConditions:
    """The three vanishing quantities that certify consistency, plus rho3.

    rho3 = (1 + rho2)[1 + 2 sqrt(log(2/delta) / r(SigmaPerp))]^2 - 1.  When
    ``rho2`` is not given it is set to n log(4/delta)^2 / R(SigmaPerp), the
    scale required by the norm bound, capped just below 1.
    """
    if n < 1:
        raise ValueError("n must be positive")
    tr, _ = _trace_op(SigmaPerp)
    r, R = effective_ranks(SigmaPerp)
    if rho2 is None:
        rho2 = min(n * math.log(4.0 / delta) ** 2 / R, 1.0 - 1e-12)
    rho3 = (1.0 + rho2) * (1.0 + 2.0 * math.sqrt(math.log(2.0 / delta) / r)) ** 2 - 1.0
    return BenignConditions(n / R, norm_wsharp_sq * tr / n, k / n, float(rho2), rho3)


def ols_psi_excess(sigma_sq, d, n) -> float:
    """sigma^2 (d/n) / (1 - d/n): the excess loss of OLS predicted by psi."""
    if d >= n:
        raise ValueError("need d < n")
    g = d / n
    return sigma_sq * g / (1.0 - g)


@dataclass
class BoundReport:
    complexity_C: float
    bound_value: float
    correction: float = 1.0
    delta: float = DEFAULT_DELTA
    kind: str = "optimistic"
    train_loss: Optional[float] = None

    def as_row(self) -> dict:
        return {"bound_value": self.bound_value, "complexity_C": self.complexity_C, "kind": self.kind}


# --- local Gaussian width over an l2 ball ----------------------------------

def _bisect_decreasing(fn, lo, hi, tol, max_iter=200):
    # root of a decreasing fn on [lo, hi], vectorized; bracket stops at tol (relative)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        pos = fn(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= tol * np.maximum(hi, 1.0)):
            break
    return 0.5 * (lo + hi)


def local_gaussian_width_l2(split: CovSplit, w_parallel, r_w: float, B: float, mc_samples: int = 2000, seed=0,
                            tol: float = 1e-9, return_samples: bool = False):
    """MC estimate of E sup{<Qv, x> : (I-Q)v = w_par, ||Sigma^{1/2} Q v|| <= r_w, ||v|| <= B}.

    ``w_parallel`` is either a d-vector (taken through I - Q) or the k
    coordinates of phi(w).  Writing Qv = N c with N an orthonormal basis of
    range(Q) and rotating to the eigenbasis of N^T Sigma N, x enters only
    through h ~ N(0, diag(m)).  Each sample is a linear maximization over an
    ellipsoid intersected with a ball; the ellipsoid-only and ball-only
    solutions are tried first and the rest solve the two-multiplier dual by
    nested bisection.
    """
    if r_w < 0 or B < 0:
        raise ValueError("r_w and B must be nonnegative")
    N, m, V = split.geometry()
    wp = np.asarray(w_parallel, dtype=float).ravel()
    if wp.size == split.k and split.k != split.d:
        a = split.wstars.T @ wp
    else:
        a = split.parallel_part(wp)
    aS = N.T @ a
    a_out_sq = max(float(a @ a) - float(aS @ aS), 0.0)
    Bp_sq = B * B - a_out_sq
    if Bp_sq < -1e-12 * max(B * B, 1.0):
        raise ValueError("infeasible fiber: the ball does not reach the parallel part")
    Bp = math.sqrt(max(Bp_sq, 0.0))
    at = V.T @ aS  # shift in eigen coordinates
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((mc_samples, m.size))
    if r_w == 0 or Bp == 0 or (math.isinf(B) and math.isinf(r_w)):
        vals = np.zeros(mc_samples) if not (math.isinf(B) and math.isinf(r_w)) else np.full(mc_samples, np.inf)
        return (float(vals.mean()), vals) if return_samples else float(vals.mean())
    sm = np.sqrt(m)
    h = z * sm
    pos = m > 1e-14 * max(float(m.max()), 1e-300)
    vals = np.empty(mc_samples)
    todo = np.ones(mc_samples, bool)

    # ellipsoid only: c = r z / (sqrt(m) ||z||) on m > 0, c = -a on the null directions
    if not math.isinf(r_w):
        zn = np.linalg.norm(z[:, pos], axis=1)
        c = np.zeros_like(h)
        with np.errstate(divide="ignore", invalid="ignore"):
            c[:, pos] = r_w * z[:, pos] / (sm[pos] * np.where(zn > 0, zn, 1.0)[:, None])
        c[:, ~pos] = -at[~pos]
        ok = np.sum((c + at) ** 2, axis=1) <= Bp_sq * (1 + 1e-12)
        vals[ok] = r_w * zn[ok]
        todo &= ~ok
    # ball only
    if math.isinf(Bp) and np.any(todo):
        raise ValueError("unbounded problem: r_w is infinite along directions the ball does not cap")
    hn = np.linalg.norm(h, axis=1)
    c = -at + Bp * h / np.where(hn > 0, hn, 1.0)[:, None]
    ok = todo & (np.sum(m * c * c, axis=1) <= r_w * r_w * (1 + 1e-12))
    vals[ok] = np.sum(c[ok] * h[ok], axis=1)
    todo &= ~ok
    if np.any(todo):
        vals[todo] = _both_active(h[todo], m, at, r_w, Bp_sq, tol)
    est = float(vals.mean())
    return (est, vals) if return_samples else est


def _both_active(h, m, at, r, Bp_sq, tol):
    # c(mu, nu) = (h - 2 nu a) / (2 (mu m + nu)); ellipsoid and ball both tight
    r_sq = r * r

    def c_of(mu, nu):
        return (h - 2.0 * nu[:, None] * at) / (2.0 * (mu[:, None] * m + nu[:, None]))

    def mu_for(nu):
        def ell(mu):
            c = c_of(mu, nu)
            return np.sum(m * c * c, axis=1) - r_sq

        hi = np.ones_like(nu)
        for _ in range(200):
            grow = ell(hi) > 0
            if not np.any(grow):
                break
            hi = np.where(grow, 2.0 * hi, hi)
        lo = np.zeros_like(nu)
        # at mu = 0 the ellipsoid may already hold; then mu = 0
        mu = _bisect_decreasing(ell, lo, hi, tol)
        return np.where(ell(lo) <= 0, 0.0, mu)

    def ball(nu):
        mu = mu_for(nu)
        c = c_of(mu, nu)
        return np.sum((c + at) ** 2, axis=1) - Bp_sq

    hi = np.ones(h.shape[0])
    for _ in range(200):
        grow = ball(hi) > 0
        if not np.any(grow):
            break
        hi = np.where(grow, 2.0 * hi, hi)
    lo = np.full_like(hi, 1e-300)
    nu = _bisect_decreasing(ball, lo, hi, tol)
    mu = mu_for(nu)
    c = c_of(mu, nu)
    return np.sum(c * h, axis=1)
