"""Scalar losses, their Moreau envelopes and proximal operators.

The envelope of a loss ``f`` with parameter ``lam > 0`` is

    f_lam(yhat, y) = inf_u  f(u, y) + lam * (u - yhat)**2

so larger ``lam`` means less smoothing.  Every function here accepts scalars
or numpy arrays (broadcast together) and returns the matching shape.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "LossKind",
    "LossSpec",
    "DomainError",
    "ClosedFormUnavailable",
    "Square",
    "SquaredHinge",
    "Hinge",
    "AbsoluteError",
    "Huber",
    "HuberHinge",
    "ZeroOne",
    "huber",
    "huber_hinge",
    "loss_value",
    "loss_derivative",
    "has_closed_form",
    "moreau_closed",
    "prox",
    "moreau_numeric",
    "golden_section",
    "lipschitz_gap_bound",
    "optimize_lambda_square_family",
]

DEFAULT_TOL = 1e-10
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class DomainError(ValueError):
    """A margin loss received a label outside {-1, +1}."""


class ClosedFormUnavailable(NotImplementedError):
    """No closed-form envelope for this loss; use :func:`moreau_numeric`."""


class LossKind(str, enum.Enum):
    SQUARE = "square"
    SQUARED_HINGE = "squared_hinge"
    HINGE = "hinge"
    ABSOLUTE_ERROR = "absolute_error"
    HUBER = "huber"
    HUBER_HINGE = "huber_hinge"
    ZERO_ONE = "zero_one"


_MARGIN_KINDS = {LossKind.SQUARED_HINGE, LossKind.HINGE, LossKind.HUBER_HINGE, LossKind.ZERO_ONE}
_CLOSED_KINDS = {LossKind.SQUARE, LossKind.SQUARED_HINGE, LossKind.ABSOLUTE_ERROR, LossKind.HINGE}


@dataclass(frozen=True)
class LossSpec:
    """A loss f(yhat, y) together with its regularity constants.

    ``delta`` is only meaningful for the two Huber variants.
    """

    kind: LossKind
    delta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if self.kind in (LossKind.HUBER, LossKind.HUBER_HINGE):
            if self.delta is None or not self.delta > 0:
                raise ValueError(f"{self.kind.value} needs a positive delta")

    @property
    def convex(self) -> bool:
        return self.kind is not LossKind.ZERO_ONE

    @property
    def is_margin(self) -> bool:
        return self.kind in _MARGIN_KINDS

    @property
    def lipschitz_M(self) -> Optional[float]:
        if self.kind in (LossKind.ABSOLUTE_ERROR, LossKind.HINGE, LossKind.HUBER, LossKind.HUBER_HINGE):
            return 1.0
        return None

    @property
    def smoothness_H(self) -> Optional[float]:
        if self.kind in (LossKind.SQUARE, LossKind.SQUARED_HINGE):
            return 2.0
        if self.kind in (LossKind.HUBER, LossKind.HUBER_HINGE):
            return 1.0 / self.delta
        return None

    @property
    def sqrt_lipschitz_L(self) -> Optional[float]:
        if self.kind in (LossKind.SQUARE, LossKind.SQUARED_HINGE):
            return 1.0
        return None

    def __call__(self, yhat, y):
        return loss_value(self, yhat, y)


def Square() -> LossSpec:
    return LossSpec(LossKind.SQUARE)


def SquaredHinge() -> LossSpec:
    return LossSpec(LossKind.SQUARED_HINGE)


def Hinge() -> LossSpec:
    return LossSpec(LossKind.HINGE)


def AbsoluteError() -> LossSpec:
    return LossSpec(LossKind.ABSOLUTE_ERROR)


def Huber(delta: float) -> LossSpec:
    return LossSpec(LossKind.HUBER, delta)


def HuberHinge(delta: float) -> LossSpec:
    return LossSpec(LossKind.HUBER_HINGE, delta)


def ZeroOne() -> LossSpec:
    return LossSpec(LossKind.ZERO_ONE)


def huber(r, delta):
    """Huber function normalised to slope one in the tails.

    r**2 / (2 delta) for |r| <= delta, |r| - delta/2 otherwise.  This is
    ``1/delta`` times the textbook form (r**2/2 inside, delta*(|r| - delta/2)
    outside).
    """
    a = np.abs(r)
    return np.where(a <= delta, a * a / (2.0 * delta), a - delta / 2.0)


def huber_hinge(m, delta):
    """Huber function of the hinge margin m = 1 - y*yhat, zero for m <= 0."""
    mp = np.maximum(m, 0.0)
    return np.where(mp <= delta, mp * mp / (2.0 * delta), mp - delta / 2.0)


def _check_labels(spec: LossSpec, y):
    if spec.is_margin:
        ya = np.asarray(y)
        if not np.all((ya == 1) | (ya == -1)):
            raise DomainError(f"{spec.kind.value} expects labels in {{-1, +1}}")


def _value(spec: LossSpec, u, y):
    k = spec.kind
    if k is LossKind.SQUARE:
        return (u - y) ** 2
    if k is LossKind.ABSOLUTE_ERROR:
        return np.abs(u - y)
    if k is LossKind.HUBER:
        return huber(u - y, spec.delta)
    m = 1.0 - y * u
    if k is LossKind.SQUARED_HINGE:
        return np.maximum(m, 0.0) ** 2
    if k is LossKind.HINGE:
        return np.maximum(m, 0.0)
    if k is LossKind.HUBER_HINGE:
        return huber_hinge(m, spec.delta)
    if k is LossKind.ZERO_ONE:
        return (y * u <= 0).astype(float)
    raise AssertionError(k)


def _squeeze(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def loss_value(spec: LossSpec, yhat, y):
    """Evaluate f(yhat, y).  ``ZeroOne`` counts yhat == 0 as an error."""
    _check_labels(spec, y)
    yhat, y = np.broadcast_arrays(np.asarray(yhat, dtype=float), np.asarray(y, dtype=float))
    return _squeeze(_value(spec, yhat, y))


def loss_derivative(spec: LossSpec, yhat, y):
    """Derivative of f in yhat (a subgradient at kinks)."""
    _check_labels(spec, y)
    u, y = np.broadcast_arrays(np.asarray(yhat, dtype=float), np.asarray(y, dtype=float))
    k = spec.kind
    if k is LossKind.SQUARE:
        g = 2.0 * (u - y)
    elif k is LossKind.ABSOLUTE_ERROR:
        g = np.sign(u - y)
    elif k is LossKind.HUBER:
        r = u - y
        g = np.clip(r / spec.delta, -1.0, 1.0)
    elif k is LossKind.SQUARED_HINGE:
        g = -2.0 * y * np.maximum(1.0 - y * u, 0.0)
    elif k is LossKind.HINGE:
        g = np.where(1.0 - y * u > 0, -y, 0.0)
    elif k is LossKind.HUBER_HINGE:
        g = -y * np.clip(np.maximum(1.0 - y * u, 0.0) / spec.delta, 0.0, 1.0)
    else:
        raise ValueError("zero-one loss has no useful derivative")
    return _squeeze(g)


def has_closed_form(spec: LossSpec) -> bool:
    return spec.kind in _CLOSED_KINDS


def moreau_closed(spec: LossSpec, lam, yhat, y):
    """Closed-form envelope for square, squared hinge, absolute error and hinge.

    Raises :class:`ClosedFormUnavailable` for the other kinds.
    """
    if not np.all(np.asarray(lam) > 0):
        raise ValueError("lam must be positive")
    if not has_closed_form(spec):
        raise ClosedFormUnavailable(spec.kind.value)
    _check_labels(spec, y)
    lam, yhat, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (lam, yhat, y)))
    k = spec.kind
    if k in (LossKind.SQUARE, LossKind.SQUARED_HINGE):
        out = lam / (1.0 + lam) * _value(spec, yhat, y)
    elif k is LossKind.ABSOLUTE_ERROR:
        a = np.abs(yhat - y)
        out = np.where(a <= 1.0 / (2.0 * lam), lam * a * a, a - 1.0 / (4.0 * lam))
    else:
        m = 1.0 - y * yhat
        out = np.where(
            m <= 0, 0.0, np.where(m <= 1.0 / (2.0 * lam), lam * m * m, m - 1.0 / (4.0 * lam))
        )
    return _squeeze(out)


def golden_section(func, lo, hi, tol=DEFAULT_TOL):
    """Vectorised golden-section minimisation of a unimodal ``func`` on [lo, hi].

    All brackets shrink in lockstep; the iteration count is set by the widest
    one.  Returns the midpoint of the final bracket (within ``tol / 2`` of the
    minimiser).
    """
    a = np.array(lo, dtype=float, copy=True)
    b = np.array(hi, dtype=float, copy=True)
    width = float(np.max(b - a)) if a.size else 0.0
    if width <= tol:
        return 0.5 * (a + b)
    n_iter = int(math.ceil(math.log(tol / width) / math.log(_INV_PHI))) + 1
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(n_iter):
        left = fc < fd
        # left: keep [a, d], old c becomes new d; else keep [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _INV_PHI * (b - a)
        new_d = a + _INV_PHI * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        probe = np.where(left, c_next, d_next)
        fp = func(probe)
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        c, d = c_next, d_next
    return 0.5 * (a + b)


def _right_slope(spec: LossSpec, u, y):
    # right derivative in u; exact at kinks so slope bisection stays monotone
    k = spec.kind
    if k is LossKind.SQUARE:
        return 2.0 * (u - y)
    if k is LossKind.ABSOLUTE_ERROR:
        return np.where(u >= y, 1.0, -1.0)
    if k is LossKind.HUBER:
        return np.clip((u - y) / spec.delta, -1.0, 1.0)
    m = 1.0 - y * u
    active = (m > 0) | ((m == 0) & (y < 0))
    if k is LossKind.SQUARED_HINGE:
        return -2.0 * y * np.maximum(m, 0.0)
    if k is LossKind.HINGE:
        return np.where(active, -y, 0.0)
    if k is LossKind.HUBER_HINGE:
        return np.where(active, -y * np.minimum(np.maximum(m, 0.0) / spec.delta, 1.0), 0.0)
    raise AssertionError(k)


def prox(spec: LossSpec, lam, yhat, y, tol=DEFAULT_TOL, method="bisect"):
    """Proximal point argmin_u f(u, y) + lam (u - yhat)**2, to ``tol`` in u.

    The minimiser satisfies lam (u* - yhat)**2 <= f(yhat, y), which gives the
    search bracket.  ``method="bisect"`` bisects on the sign of the right
    derivative of the (convex) objective; ``"golden"`` is derivative-free but
    cannot resolve u* much below sqrt(machine eps) where the objective is
    smooth.
    """
    if not spec.convex:
        raise ValueError("proximal operator needs a convex loss")
    if not np.all(np.asarray(lam) > 0):
        raise ValueError("lam must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    _check_labels(spec, y)
    lam, yhat, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (lam, yhat, y)))
    half = np.sqrt(_value(spec, yhat, y) / lam)
    lo, hi = yhat - half, yhat + half

    if method == "golden":
        def objective(u):
            return _value(spec, u, y) + lam * (u - yhat) ** 2

        u = golden_section(objective, lo, hi, tol)
    elif method == "bisect":
        width = float(np.max(hi - lo)) if lo.size else 0.0
        n_iter = max(int(math.ceil(math.log2(width / tol))) + 1, 0) if width > tol else 0
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            up = _right_slope(spec, mid, y) + 2.0 * lam * (mid - yhat) >= 0
            hi = np.where(up, mid, hi)
            lo = np.where(up, lo, mid)
        u = 0.5 * (lo + hi)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _squeeze(np.where(half == 0, yhat, u))


def moreau_numeric(spec: LossSpec, lam, yhat, y, tol=DEFAULT_TOL, method="bisect"):
    """Envelope value computed through :func:`prox`."""
    u = np.asarray(prox(spec, lam, yhat, y, tol, method))
    lam, yhat, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (lam, yhat, y)))
    return _squeeze(_value(spec, u, y) + lam * (u - yhat) ** 2)


def lipschitz_gap_bound(M, lam):
    """Upper bound M**2 / (4 lam) on f - f_lam for an M-Lipschitz loss."""
    if M < 0 or not lam > 0:
        raise ValueError("need M >= 0 and lam > 0")
    return M * M / (4.0 * lam)


def optimize_lambda_square_family(a, b):
    """sup over lam >= 0 of lam/(1+lam) * a - lam * b.

    Equals (sqrt(a) - sqrt(b))**2 when a > b and 0 otherwise.  With b == 0 the
    supremum is approached as lam -> inf.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("a and b must be nonnegative")
    return _squeeze(np.where(a > b, (np.sqrt(a) - np.sqrt(b)) ** 2, 0.0))
