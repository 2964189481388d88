"""Regularization paths and interpolators for linear models.

Conventions: ridge minimizes (1/n)||y - Xw - b||^2 + lam ||w||^2, LASSO
minimizes (1/2n)||y - Xw - b||^2 + alpha ||w||_1 and the squared-hinge
problems minimize (1/n) sum max(0, 1 - y_i(<w, x_i> + b))^2 plus the penalty.
The intercept is never penalized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numba
import numpy as np
from scipy.optimize import minimize_scalar

from .envelope import LossSpec, loss_derivative, loss_value

__all__ = [
    "FitResult",
    "RegPath",
    "ridge_path",
    "min_norm_least_squares",
    "lasso_path",
    "lasso_alpha_max",
    "min_l1_interpolator",
    "sq_hinge_erm",
    "sq_hinge_path",
    "svc_C_to_lambda",
    "constrained_erm",
    "project_l1_ball",
    "one_pass_sgd_1d",
    "default_ridge_grid",
    "default_lasso_grid",
]


@dataclass
class FitResult:
    w: np.ndarray
    b: float
    train_loss: float
    iterations: int
    converged: bool
    info: dict = field(default_factory=dict)

    @property
    def norm_l1(self) -> float:
        return float(np.abs(self.w).sum())

    @property
    def norm_l2(self) -> float:
        return float(np.linalg.norm(self.w))


@dataclass
class RegPath:
    """Solutions along a descending grid of penalty strengths."""

    reg_values: np.ndarray
    coefs: np.ndarray  # (m, d)
    intercepts: np.ndarray
    train_losses: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray

    @property
    def norms_l1(self) -> np.ndarray:
        return np.abs(self.coefs).sum(axis=1)

    @property
    def norms_l2(self) -> np.ndarray:
        return np.linalg.norm(self.coefs, axis=1)

    def __len__(self):
        return len(self.reg_values)

    def fit(self, i: int) -> FitResult:
        return FitResult(self.coefs[i], float(self.intercepts[i]), float(self.train_losses[i]),
                         int(self.iterations[i]), bool(self.converged[i]))

    def append(self, other: "RegPath") -> "RegPath":
        cat = np.concatenate
        return RegPath(cat([self.reg_values, other.reg_values]), np.vstack([self.coefs, other.coefs]),
                       cat([self.intercepts, other.intercepts]), cat([self.train_losses, other.train_losses]),
                       cat([self.converged, other.converged]), cat([self.iterations, other.iterations]))


def _check_design(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("design must be a nonempty n x d matrix")
    if X.shape[0] != y.size:
        raise ValueError("X and y disagree on n")
    return X, y


def _center(X, y, fit_intercept):
    if not fit_intercept:
        return X, y, np.zeros(X.shape[1]), 0.0
    xm = X.mean(axis=0)
    ym = float(y.mean())
    return X - xm, y - ym, xm, ym


def _descending(grid):
    g = np.asarray(grid, dtype=float).ravel()
    if g.size == 0 or np.any(g <= 0):
        raise ValueError("penalty grid must be nonempty and strictly positive")
    return np.sort(g)[::-1]


def _mse(X, y, w, b):
    r = y - X @ w - b
    return float(r @ r / y.size)


# --- ridge -----------------------------------------------------------------

def default_ridge_grid(X, m: int = 50, lo: float = 1e-7, hi: float = 1e2) -> np.ndarray:
    """m log-spaced ridge penalties, scaled by the top squared singular value over n."""
    X = np.asarray(X, dtype=float)
    smax = np.linalg.norm(X, 2)
    return smax**2 / X.shape[0] * np.logspace(math.log10(hi), math.log10(lo), m)


def ridge_path(X, y, reg_grid, fit_intercept: bool = False) -> RegPath:
    """Ridge solutions from a single thin SVD of the (centered) design."""
    X, y = _check_design(X, y)
    lams = _descending(reg_grid)
    n, d = X.shape
    Xc, yc, xm, ym = _center(X, y, fit_intercept)
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    uty = U.T @ yc
    filt = s[None, :] / (s[None, :] ** 2 + n * lams[:, None])
    coefs = (filt * uty[None, :]) @ Vt
    b = ym - coefs @ xm if fit_intercept else np.zeros(lams.size)
    resid = y[None, :] - coefs @ X.T - b[:, None]
    losses = np.mean(resid**2, axis=1)
    m = lams.size
    return RegPath(lams, coefs, b, losses, np.ones(m, bool), np.ones(m, int))


def min_norm_least_squares(X, y, fit_intercept: bool = False, rcond: Optional[float] = None) -> FitResult:
    """Pseudoinverse solution X^+ y (minimal l2 norm among least-squares fits)."""
    X, y = _check_design(X, y)
    Xc, yc, xm, ym = _center(X, y, fit_intercept)
    w, _, rank, _ = np.linalg.lstsq(Xc, yc, rcond=rcond)
    b = ym - float(w @ xm) if fit_intercept else 0.0
    return FitResult(w, b, _mse(X, y, w, b), 1, True, {"rank": int(rank)})


# --- LASSO -----------------------------------------------------------------

@numba.njit(cache=True)
def _soft(v, t):
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


@numba.njit(cache=True)
def _cd_sweep(X, r, w, z, alpha, idx):
    n = X.shape[0]
    max_change = 0.0
    for jj in range(idx.size):
        j = idx[jj]
        if z[j] == 0.0:
            continue
        xj = X[:, j]
        wj = w[j]
        rho = 0.0
        for i in range(n):
            rho += xj[i] * r[i]
        rho = rho / n + z[j] * wj
        new = _soft(rho, alpha) / z[j]
        delta = new - wj
        if delta != 0.0:
            for i in range(n):
                r[i] -= delta * xj[i]
            w[j] = new
            if abs(delta) > max_change:
                max_change = abs(delta)
    return max_change


@numba.njit(cache=True)
def _cd_lasso(X, r, w, z, alpha, tol, max_iter):
    # full sweeps interleaved with sweeps over the current support
    d = X.shape[1]
    everything = np.arange(d)
    it = 0
    while it < max_iter:
        change = _cd_sweep(X, r, w, z, alpha, everything)
        it += 1
        if change < tol:
            return it, True
        active = np.nonzero(w)[0]
        while it < max_iter:
            change = _cd_sweep(X, r, w, z, alpha, active)
            it += 1
            if change < tol:
                break
    return it, False


def lasso_alpha_max(X, y, fit_intercept: bool = False) -> float:
    X, y = _check_design(X, y)
    Xc, yc, _, _ = _center(X, y, fit_intercept)
    return float(np.max(np.abs(Xc.T @ yc)) / X.shape[0])


def default_lasso_grid(X, y, m: int = 50, eps: float = 1e-4, fit_intercept: bool = False) -> np.ndarray:
    amax = lasso_alpha_max(X, y, fit_intercept)
    if amax == 0.0:
        amax = 1.0
    return amax * np.logspace(0.0, math.log10(eps), m)


def lasso_path(X, y, alpha_grid, fit_intercept: bool = False, tol: float = 1e-7, max_iter: int = 100_000,
               w0: Optional[np.ndarray] = None) -> RegPath:
    """Cyclic coordinate descent with warm starts along a descending alpha grid.

    Converged means the largest coefficient change over a full sweep fell
    below ``tol``.
    """
    X, y = _check_design(X, y)
    alphas = _descending(alpha_grid)
    n, d = X.shape
    Xc, yc, xm, ym = _center(X, y, fit_intercept)
    Xf = np.asfortranarray(Xc)
    z = np.einsum("ij,ij->j", Xf, Xf) / n
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=float)
    r = yc - Xf @ w
    m = alphas.size
    coefs = np.empty((m, d))
    iters = np.empty(m, int)
    conv = np.empty(m, bool)
    for i, a in enumerate(alphas):
        iters[i], conv[i] = _cd_lasso(Xf, r, w, z, float(a), float(tol), int(max_iter))
        coefs[i] = w
    b = ym - coefs @ xm if fit_intercept else np.zeros(m)
    resid = y[None, :] - coefs @ X.T - b[:, None]
    return RegPath(alphas, coefs, b, np.mean(resid**2, axis=1), conv, iters)


def min_l1_interpolator(X, y, continuation_floor: float = 1e-7, n_steps: int = 60, tol: float = 1e-9,
                        max_iter: int = 200_000, fit_intercept: bool = False) -> FitResult:
    """Approximate basis pursuit: LASSO continuation down to alpha = floor * alpha_max.

    The sup-norm residual is reported in ``info``; ``converged`` is False when
    it has not shrunk below 1e-3 of the label scale.
    """
    X, y = _check_design(X, y)
    amax = lasso_alpha_max(X, y, fit_intercept)
    if amax == 0.0:
        return FitResult(np.zeros(X.shape[1]), float(y.mean()) if fit_intercept else 0.0, 0.0, 0, True,
                         {"residual_inf": 0.0})
    grid = amax * np.logspace(0.0, math.log10(continuation_floor), n_steps)
    path = lasso_path(X, y, grid, fit_intercept, tol, max_iter)
    w, b = path.coefs[-1], float(path.intercepts[-1])
    res = float(np.max(np.abs(y - X @ w - b)))
    scale = max(float(np.max(np.abs(y))), 1e-300)
    ok = bool(path.converged[-1]) and res <= 1e-3 * scale
    return FitResult(w, b, float(path.train_losses[-1]), int(path.iterations.sum()), ok,
                     {"residual_inf": res, "alpha": float(path.reg_values[-1])})


# --- squared hinge ---------------------------------------------------------

def svc_C_to_lambda(C: float, n: int) -> float:
    """Penalty matching an SVM objective 0.5||w||^2 + C sum(loss) after division by nC."""
    return 1.0 / (2.0 * n * C)


def _sqh_parts(X, y, w, b):
    m = 1.0 - y * (X @ w + b)
    mp = np.maximum(m, 0.0)
    return mp, float(mp @ mp / y.size)


def _check_pm1(y):
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("squared hinge needs labels in {-1, +1}")


def sq_hinge_erm(X, y, penalty: Tuple[str, float] = ("l2", 1e-3), fit_intercept: bool = True, tol: float = 1e-6,
                 max_iter: Optional[int] = None, method: str = "newton", w0=None, b0: float = 0.0,
                 gram: Optional[np.ndarray] = None) -> FitResult:
    """Penalized squared-hinge ERM.

    ``penalty`` is ("l2", lam) for lam ||w||^2 or ("l1", alpha) for
    alpha ||w||_1.  The l2 problem is solved by a generalized Newton method
    (``method="newton"``) or plain gradient descent (``"gd"``), both with
    Armijo backtracking, stopping when the gradient norm is below ``tol``.  The
    l1 problem uses accelerated proximal gradient with restarts, stopping on
    the prox-gradient residual.
    """
    X, y = _check_design(X, y)
    _check_pm1(y)
    kind, lam = penalty
    lam = float(lam)
    if lam < 0:
        raise ValueError("penalty must be nonnegative")
    w = np.zeros(X.shape[1]) if w0 is None else np.array(w0, dtype=float)
    b = float(b0) if fit_intercept else 0.0
    if kind == "l2":
        if method == "newton":
            return _sqh_newton(X, y, lam, fit_intercept, tol, max_iter or 500, w, b, gram)
        if method == "gd":
            return _sqh_gd(X, y, lam, fit_intercept, tol, max_iter or 100_000, w, b)
        raise ValueError(f"unknown method {method!r}")
    if kind == "l1":
        return _sqh_prox(X, y, lam, fit_intercept, tol, max_iter or 100_000, w, b)
    raise ValueError(f"unknown penalty {kind!r}")


def _sqh_l2_obj(X, y, w, b, lam):
    mp, loss = _sqh_parts(X, y, w, b)
    return loss + lam * float(w @ w), mp, loss


def _sqh_l2_grad(X, y, w, mp, lam, fit_intercept):
    n = y.size
    c = -2.0 / n * y * mp
    gw = X.T @ c + 2.0 * lam * w
    gb = float(c.sum()) if fit_intercept else 0.0
    return gw, gb


def _sqh_newton(X, y, lam, fit_intercept, tol, max_iter, w, b, gram):
    n, d = X.shape
    primal = d + 1 <= n or lam == 0.0
    if not primal and gram is None:
        gram = X @ X.T
    F, mp, loss = _sqh_l2_obj(X, y, w, b, lam)
    history = [F]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gw, gb = _sqh_l2_grad(X, y, w, mp, lam, fit_intercept)
        gnorm = math.sqrt(float(gw @ gw) + gb * gb)
        if gnorm <= tol:
            converged = True
            it -= 1
            break
        act = mp > 0
        if primal:
            A = X[act]
            H = 2.0 / n * (A.T @ A) + 2.0 * lam * np.eye(d)
            if fit_intercept:
                col = 2.0 / n * A.sum(axis=0)
                H = np.block([[H, col[:, None]], [col[None, :], np.array([[2.0 / n * act.sum()]])]])
                g = np.append(gw, gb)
            else:
                g = gw
            H[np.diag_indices_from(H)] += 1e-12 * max(1.0, float(np.max(np.diag(H))))
            p = -np.linalg.solve(H, g)
            pw, pb = (p[:-1], float(p[-1])) if fit_intercept else (p, 0.0)
        else:
            pw, pb = _newton_dual_step(X, gram, act, gw, gb, lam, n, fit_intercept)
        slope = float(gw @ pw) + gb * pb
        if slope >= 0:
            pw, pb = -gw, -gb
            slope = -(gnorm**2)
        t = 1.0
        while True:
            w_new, b_new = w + t * pw, b + t * pb
            F_new, mp_new, loss_new = _sqh_l2_obj(X, y, w_new, b_new, lam)
            if F_new <= F + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        if F_new > F:
            # numerically stalled; keep the current iterate
            break
        w, b, F, mp, loss = w_new, b_new, F_new, mp_new, loss_new
        history.append(F)
    return FitResult(w, b, loss, it, converged, {"objective": F, "history": history})


def _newton_dual_step(X, gram, act, gw, gb, lam, n, fit_intercept):
    # Newton system solved in the span of the active rows (d > n case)
    idx = np.nonzero(act)[0]
    if idx.size == 0:
        return -gw / (2.0 * lam), 0.0
    XI = X[idx]
    K = gram[np.ix_(idx, idx)] / (n * lam)
    K[np.diag_indices_from(K)] += 1.0
    rhs = -(XI @ gw) / (2.0 * lam)
    if fit_intercept:
        m = idx.size
        M = np.zeros((m + 1, m + 1))
        M[:m, :m] = K
        M[:m, m] = -1.0
        M[m, :m] = 1.0
        sol = np.linalg.solve(M, np.append(rhs, -n * gb / 2.0))
        s, pb = sol[:m], float(sol[m])
    else:
        s, pb = np.linalg.solve(K, rhs), 0.0
    pw = -(gw + 2.0 / n * (XI.T @ s)) / (2.0 * lam)
    return pw, pb


def _sqh_gd(X, y, lam, fit_intercept, tol, max_iter, w, b):
    F, mp, loss = _sqh_l2_obj(X, y, w, b, lam)
    t = 1.0
    history = [F]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gw, gb = _sqh_l2_grad(X, y, w, mp, lam, fit_intercept)
        g2 = float(gw @ gw) + gb * gb
        if math.sqrt(g2) <= tol:
            converged = True
            it -= 1
            break
        t = min(t * 2.0, 1e6)
        while True:
            w_new, b_new = w - t * gw, b - t * gb
            F_new, mp_new, loss_new = _sqh_l2_obj(X, y, w_new, b_new, lam)
            if F_new <= F - 0.5 * t * g2 or t < 1e-16:
                break
            t *= 0.5
        if F_new > F:
            break
        w, b, F, mp, loss = w_new, b_new, F_new, mp_new, loss_new
        history.append(F)
    return FitResult(w, b, loss, it, converged, {"objective": F, "history": history})


def _soft_vec(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _sqh_prox(X, y, alpha, fit_intercept, tol, max_iter, w, b):
    n = y.size

    def smooth(w, b):
        mp, loss = _sqh_parts(X, y, w, b)
        c = -2.0 / n * y * mp
        return loss, X.T @ c, (float(c.sum()) if fit_intercept else 0.0)

    def total(w, b):
        return _sqh_parts(X, y, w, b)[1] + alpha * float(np.abs(w).sum())

    L = 2.0 / n * (np.linalg.norm(X, 2) ** 2 + (n if fit_intercept else 0))
    t = 1.0 / max(L, 1e-300)
    vw, vb = w.copy(), b
    theta = 1.0
    F = total(w, b)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        f_v, gw, gb = smooth(vw, vb)
        while True:
            w_new = _soft_vec(vw - t * gw, t * alpha)
            b_new = vb - t * gb
            dw, db = w_new - vw, b_new - vb
            f_new = _sqh_parts(X, y, w_new, b_new)[1]
            if f_new <= f_v + float(gw @ dw) + gb * db + (float(dw @ dw) + db * db) / (2 * t) + 1e-15:
                break
            t *= 0.5
        resid = math.sqrt(float(dw @ dw) + db * db) / t
        F_new = f_new + alpha * float(np.abs(w_new).sum())
        if F_new > F:
            # restart momentum from the last accepted point
            vw, vb, theta = w.copy(), b, 1.0
            if resid <= tol:
                converged = True
                break
            continue
        theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        beta = (theta - 1.0) / theta_new
        vw = w_new + beta * (w_new - w)
        vb = b_new + beta * (b_new - b)
        w, b, F, theta = w_new, b_new, F_new, theta_new
        if resid <= tol:
            # check the residual at the accepted point itself
            _, gw2, gb2 = smooth(w, b)
            pw = _soft_vec(w - t * gw2, t * alpha) - w
            pb = -t * gb2
            if math.sqrt(float(pw @ pw) + pb * pb) / t <= tol:
                converged = True
                break
    loss = _sqh_parts(X, y, w, b)[1]
    return FitResult(w, b, loss, it, converged, {"objective": F})


def sq_hinge_path(X, y, reg_grid, penalty: str = "l2", fit_intercept: bool = True, tol: float = 1e-6,
                  max_iter: Optional[int] = None, method: str = "newton") -> RegPath:
    """Warm-started squared-hinge fits along a descending penalty grid."""
    X, y = _check_design(X, y)
    _check_pm1(y)
    grid = _descending(reg_grid)
    n, d = X.shape
    gram = X @ X.T if d + 1 > n else None
    w, b = np.zeros(d), 0.0
    m = grid.size
    coefs, bs, losses = np.empty((m, d)), np.empty(m), np.empty(m)
    conv, iters = np.empty(m, bool), np.empty(m, int)
    for i, lam in enumerate(grid):
        fit = sq_hinge_erm(X, y, (penalty, lam), fit_intercept, tol, max_iter, method, w, b, gram=gram)
        w, b = fit.w, fit.b
        coefs[i], bs[i], losses[i], conv[i], iters[i] = w, b, fit.train_loss, fit.converged, fit.iterations
    return RegPath(grid, coefs, bs, losses, conv, iters)


# --- constrained ERM -------------------------------------------------------

def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto {||w||_1 <= radius} (sort-based)."""
    v = np.asarray(v, dtype=float)
    if radius <= 0:
        return np.zeros_like(v)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u * k > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def _project(v, ball, B):
    if ball == "l2":
        nv = float(np.linalg.norm(v))
        return v if nv <= B else v * (B / nv) if nv > 0 else v
    if ball == "l1":
        return project_l1_ball(v, B)
    raise ValueError(f"unknown ball {ball!r}")


def _dual_norm(g, ball):
    return float(np.linalg.norm(g)) if ball == "l2" else float(np.max(np.abs(g)))


def constrained_erm(X, y, loss: LossSpec, ball: Tuple[str, float] = ("l2", 1.0), fit_intercept: bool = False,
                    tol: float = 1e-6, max_iter: int = 20_000, w0=None) -> FitResult:
    """Minimize the empirical loss over {||w|| <= B} (l2 or l1 ball).

    Smooth losses use accelerated projected gradient with backtracking; the
    others use projected subgradient steps with the best iterate kept.  The
    reported ``gap`` is the Frank-Wolfe duality gap <g, w> + B ||g||_*, an
    upper bound on the suboptimality in w (given b) for any (sub)gradient g.
    """
    X, y = _check_design(X, y)
    kind, B = ball
    B = float(B)
    if B < 0:
        raise ValueError("radius must be nonnegative")
    if not loss.convex:
        raise ValueError("constrained ERM needs a convex loss")
    n, d = X.shape

    def value(w, b):
        return float(np.mean(loss_value(loss, X @ w + b, y)))

    def grad(w, b):
        g = np.asarray(loss_derivative(loss, X @ w + b, y)) / n
        return X.T @ g, (float(g.sum()) if fit_intercept else 0.0)

    def gap_of(w, b):
        gw, gb = grad(w, b)
        return float(gw @ w) + B * _dual_norm(gw, kind), abs(gb)

    w = _project(np.zeros(d) if w0 is None else np.array(w0, dtype=float), kind, B)
    b = 0.0
    if fit_intercept:
        b = _best_intercept(loss, X @ w, y)
    F = value(w, b)
    converged = False
    it = 0
    if loss.smoothness_H is not None:
        H = loss.smoothness_H
        L = H / n * (np.linalg.norm(X, 2) ** 2 + (n if fit_intercept else 0))
        t = 1.0 / max(L, 1e-300)
        vw, vb, theta = w.copy(), b, 1.0
        for it in range(1, max_iter + 1):
            gap, gb_abs = gap_of(w, b)
            if gap <= tol and gb_abs <= tol:
                converged = True
                it -= 1
                break
            f_v = value(vw, vb)
            gw, gb = grad(vw, vb)
            while True:
                w_new = _project(vw - t * gw, kind, B)
                b_new = vb - t * gb
                dw, db = w_new - vw, b_new - vb
                f_new = value(w_new, b_new)
                if f_new <= f_v + float(gw @ dw) + gb * db + (float(dw @ dw) + db * db) / (2 * t) + 1e-15:
                    break
                t *= 0.5
            if f_new > F:
                vw, vb, theta = w.copy(), b, 1.0
                continue
            theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
            beta = (theta - 1.0) / theta_new
            vw, vb = w_new + beta * (w_new - w), b_new + beta * (b_new - b)
            w, b, F, theta = w_new, b_new, f_new, theta_new
        gap, _ = gap_of(w, b)
    else:
        best = (F, w.copy(), b)
        scale = (B if B > 0 else 1.0)
        for it in range(1, max_iter + 1):
            gw, gb = grad(w, b)
            gap = float(gw @ w) + B * _dual_norm(gw, kind)
            if gap <= tol and (not fit_intercept or abs(gb) <= tol):
                converged = True
                break
            gnorm = math.sqrt(float(gw @ gw) + gb * gb)
            if gnorm == 0:
                converged = True
                break
            step = scale / (gnorm * math.sqrt(it))
            w = _project(w - step * gw, kind, B)
            b = b - step * gb
            f = value(w, b)
            if f < best[0]:
                best = (f, w.copy(), b)
        F, w, b = best
        gap, _ = gap_of(w, b)
        converged = converged or gap <= tol
    return FitResult(w, b, value(w, b), it, converged, {"gap": max(gap, 0.0)})


def _best_intercept(loss, pred, y):
    span = float(np.max(np.abs(y - pred))) + 1.0
    res = minimize_scalar(lambda c: float(np.mean(loss_value(loss, pred + c, y))), bounds=(-span, span),
                          method="bounded", options={"xatol": 1e-12})
    return float(res.x)


# --- population SGD --------------------------------------------------------

@numba.njit(cache=True)
def _sgd_chunk(x, y, state, step0):
    # state = [w, b, t, w_sum, b_sum]
    w, b, t, ws, bs = state[0], state[1], state[2], state[3], state[4]
    for i in range(x.size):
        t += 1.0
        m = 1.0 - y[i] * (w * x[i] + b)
        if m > 0:
            eta = step0 / math.sqrt(t)
            g = -2.0 * y[i] * m
            w -= eta * g * x[i]
            b -= eta * g
        ws += w
        bs += b
    state[0], state[1], state[2], state[3], state[4] = w, b, t, ws, bs


def one_pass_sgd_1d(pop_sampler: Callable[[np.random.Generator, int], Tuple[np.ndarray, np.ndarray]],
                    init: Tuple[float, float] = (0.0, 0.0), step0: float = 0.1, n_steps: int = 1_000_000,
                    seed=0, chunk: int = 100_000) -> Tuple[float, float]:
    """One-pass SGD on E max(0, 1 - y(w x + b))^2 with steps step0/sqrt(t).

    Returns the running average of the iterates.  ``pop_sampler(rng, m)``
    must return m fresh (x, y) pairs.
    """
    rng = np.random.default_rng(seed)
    state = np.array([init[0], init[1], 0.0, 0.0, 0.0])
    left = int(n_steps)
    while left > 0:
        m = min(chunk, left)
        x, yy = pop_sampler(rng, m)
        _sgd_chunk(np.ascontiguousarray(x, dtype=float), np.ascontiguousarray(yy, dtype=float), state, float(step0))
        left -= m
    t = state[2]
    return float(state[3] / t), float(state[4] / t)
