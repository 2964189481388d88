"""Synthetic data: standardized feature distributions, diagonal covariances,
label models and the Gaussian surrogate of a multi-index model.

Features are drawn as x = Sigma^{1/2} z where z has i.i.d. coordinates with
mean 0 and variance 1.  All randomness flows from explicit seeds; the same
(model, n, seed) always gives bit-identical arrays.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

__all__ = [
    "FeatureKind",
    "FeatureDistribution",
    "CovarianceSpec",
    "Isotropic",
    "Junk",
    "Harmful",
    "ExplicitDiagonal",
    "MultiIndex",
    "WellSpecifiedLinear",
    "MisspecifiedRegression",
    "LogisticClassification",
    "SignClassification",
    "DataModel",
    "Dataset",
    "derive_seed",
    "sample_features",
    "sample_labels",
    "sample_surrogate",
]

SeedLike = Union[int, np.random.SeedSequence]


def derive_seed(seed: SeedLike, *keys: int) -> np.random.SeedSequence:
    """Counter-based child seed: the result depends only on (seed, keys)."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys))
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))


def _rng(seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(seed)


# --- feature distributions -------------------------------------------------

class FeatureKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    LAPLACE = "laplace"
    RADEMACHER = "rademacher"
    POISSON_CENTERED = "poisson"
    STUDENT_T5 = "student_t5"
    WEIBULL_HALF = "weibull"
    LOGNORMAL = "lognormal"


_SQRT3 = math.sqrt(3.0)
_E = math.e


def _gaussian(rng, size):
    return rng.standard_normal(size)


def _uniform(rng, size):
    return rng.uniform(-_SQRT3, _SQRT3, size)


def _laplace(rng, size):
    # variance 2 b^2 = 1
    return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size)


def _rademacher(rng, size):
    return 2.0 * rng.integers(0, 2, size).astype(float) - 1.0


def _poisson(rng, size):
    # numpy uses the multiplicative (Knuth) method for small rates
    return rng.poisson(1.0, size).astype(float) - 1.0


def _student_t5(rng, size):
    return math.sqrt(3.0 / 5.0) * rng.standard_t(5, size)


def _weibull(rng, size):
    # shape 1/2, scale 1: mean 2, variance 20
    return (rng.weibull(0.5, size) - 2.0) / math.sqrt(20.0)


def _lognormal(rng, size):
    return (np.exp(rng.standard_normal(size)) - math.sqrt(_E)) / math.sqrt(_E * (_E - 1.0))


_SAMPLERS = {
    FeatureKind.GAUSSIAN: _gaussian,
    FeatureKind.UNIFORM: _uniform,
    FeatureKind.LAPLACE: _laplace,
    FeatureKind.RADEMACHER: _rademacher,
    FeatureKind.POISSON_CENTERED: _poisson,
    FeatureKind.STUDENT_T5: _student_t5,
    FeatureKind.WEIBULL_HALF: _weibull,
    FeatureKind.LOGNORMAL: _lognormal,
}

SYMMETRIC_KINDS = frozenset(
    {FeatureKind.GAUSSIAN, FeatureKind.UNIFORM, FeatureKind.LAPLACE, FeatureKind.RADEMACHER, FeatureKind.STUDENT_T5}
)


@dataclass(frozen=True)
class FeatureDistribution:
    """Coordinate law of z, already standardized to mean 0 and variance 1."""

    kind: FeatureKind = FeatureKind.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))

    @property
    def symmetric(self) -> bool:
        return self.kind in SYMMETRIC_KINDS

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return _SAMPLERS[self.kind](rng, size)


# --- covariances -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Sigma = U diag(eigs) U^T, with U the identity unless ``rotation`` is set."""

    kind: str
    eigs: np.ndarray
    k: int = 0
    eps: Optional[float] = None
    rotation: Optional[np.ndarray] = None

    def __post_init__(self):
        eigs = np.asarray(self.eigs, dtype=float)
        if eigs.ndim != 1 or eigs.size == 0:
            raise ValueError("eigenvalues must be a nonempty vector")
        if np.any(eigs < 0):
            raise ValueError("eigenvalues must be nonnegative")
        object.__setattr__(self, "eigs", eigs)
        if self.rotation is not None:
            U = np.asarray(self.rotation, dtype=float)
            if U.shape != (eigs.size, eigs.size):
                raise ValueError("rotation must be d x d")
            if not np.allclose(U.T @ U, np.eye(eigs.size), atol=1e-8):
                raise ValueError("rotation must be orthogonal")
            object.__setattr__(self, "rotation", U)

    @property
    def d(self) -> int:
        return self.eigs.size

    @property
    def is_diagonal(self) -> bool:
        return self.rotation is None

    def matrix(self) -> np.ndarray:
        if self.rotation is None:
            return np.diag(self.eigs)
        U = self.rotation
        return (U * self.eigs) @ U.T

    def sqrt_matrix(self) -> np.ndarray:
        if self.rotation is None:
            return np.diag(np.sqrt(self.eigs))
        U = self.rotation
        return (U * np.sqrt(self.eigs)) @ U.T

    def apply_sqrt(self, Z: np.ndarray) -> np.ndarray:
        """Rows of Z mapped through Sigma^{1/2} (Sigma^{1/2} is symmetric)."""
        if self.rotation is None:
            return Z * np.sqrt(self.eigs)
        return Z @ self.sqrt_matrix()

    def with_rotation(self, U: np.ndarray) -> "CovarianceSpec":
        return CovarianceSpec(self.kind, self.eigs, self.k, self.eps, U)

    def describe(self) -> dict:
        out = {"kind": self.kind, "d": self.d, "k": self.k}
        if self.eps is not None:
            out["eps"] = self.eps
        if self.kind == "explicit":
            out["eigs"] = self.eigs.tolist()
        return out


def Isotropic(d: int) -> CovarianceSpec:
    return CovarianceSpec("isotropic", np.ones(int(d)), k=0)


def Junk(d: int, k: int = 3, eps: float = 0.05) -> CovarianceSpec:
    if not 0 <= k <= d:
        raise ValueError("need 0 <= k <= d")
    eigs = np.full(int(d), eps * eps)
    eigs[:k] = 1.0
    return CovarianceSpec("junk", eigs, k=k, eps=eps)


def Harmful(d: int, k: int = 3) -> CovarianceSpec:
    """Unit eigenvalues for the first k coordinates, then 1/j**2 for j = k+1..d."""
    if not 0 <= k <= d:
        raise ValueError("need 0 <= k <= d")
    j = np.arange(1, int(d) + 1, dtype=float)
    eigs = 1.0 / j**2
    eigs[:k] = 1.0
    return CovarianceSpec("harmful", eigs, k=k)


def ExplicitDiagonal(eigs: Sequence[float], rotation=None) -> CovarianceSpec:
    return CovarianceSpec("explicit", np.asarray(eigs, dtype=float), rotation=rotation)


# --- label models ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MultiIndex:
    """y = link(eta, xi) with eta_i = <w_i, x> and xi drawn by ``noise``.

    ``wstars`` is k x d.  The directions need not be normalized; the surrogate
    sampler accounts for their Gram matrix in the Sigma geometry.
    """

    wstars: np.ndarray
    link: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise: Callable[[np.random.Generator, int], np.ndarray]
    classification: bool = False

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.wstars, dtype=float))
        object.__setattr__(self, "wstars", W)

    @property
    def k(self) -> int:
        return self.wstars.shape[0]

    def labels(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        eta = X @ self.wstars.T
        xi = self.noise(rng, X.shape[0])
        return self.link(eta, xi)


def _pad(w, d):
    w = np.asarray(w, dtype=float).ravel()
    if w.size > d:
        raise ValueError(f"coefficient vector longer than d={d}")
    out = np.zeros(d)
    out[: w.size] = w
    return out


def _gauss_noise(scale):
    def draw(rng, n):
        return scale * rng.standard_normal(n)

    return draw


def _unif_noise(rng, n):
    return rng.random(n)


@dataclass(frozen=True)
class WellSpecifiedLinear:
    """y = <w*, x> + xi with xi ~ N(0, noise_var)."""

    wstar: tuple = (1.5,)
    noise_var: float = 0.5
    noise_is_std: bool = False
    classification = False

    def __post_init__(self):
        object.__setattr__(self, "wstar", tuple(float(v) for v in np.ravel(self.wstar)))

    @property
    def sigma_sq(self) -> float:
        return self.noise_var**2 if self.noise_is_std else self.noise_var

    def wstar_vector(self, d: int) -> np.ndarray:
        return _pad(self.wstar, d)

    def multi_index(self, d: int) -> MultiIndex:
        w = self.wstar_vector(d)
        return MultiIndex(w[None, :], lambda eta, xi: eta[:, 0] + xi, _gauss_noise(math.sqrt(self.sigma_sq)))


@dataclass(frozen=True)
class MisspecifiedRegression:
    """y = scale*x1 + |x1| cos(x2) + x3*xi with xi ~ N(0, noise_var).

    The noise parameter is read as a variance; ``noise_is_std`` flips that.
    """

    scale: float = 1.5
    noise_var: float = 0.5
    noise_is_std: bool = False
    classification = False

    @property
    def sigma_sq(self) -> float:
        return self.noise_var**2 if self.noise_is_std else self.noise_var

    def wstar_vector(self, d: int) -> np.ndarray:
        return _pad([self.scale], d)

    def multi_index(self, d: int) -> MultiIndex:
        if d < 3:
            raise ValueError("misspecified model needs d >= 3")
        W = np.zeros((3, d))
        W[0, 0] = W[1, 1] = W[2, 2] = 1.0
        s = self.scale

        def link(eta, xi):
            return s * eta[:, 0] + np.abs(eta[:, 0]) * np.cos(eta[:, 1]) + eta[:, 2] * xi

        return MultiIndex(W, link, _gauss_noise(math.sqrt(self.sigma_sq)))


@dataclass(frozen=True)
class LogisticClassification:
    """P(y = 1 | x) = sigmoid(wstar_coef * x1 + bstar), labels in {-1, +1}."""

    wstar_coef: float = 5.0
    bstar: float = 3.0
    classification = True

    def wstar_vector(self, d: int) -> np.ndarray:
        return _pad([self.wstar_coef], d)

    def prob(self, eta) -> np.ndarray:
        """P(y = 1) as a function of eta = <w*, x> + b*."""
        return expit(eta)

    def multi_index(self, d: int) -> MultiIndex:
        b = self.bstar

        def link(eta, xi):
            return np.where(xi < expit(eta[:, 0] + b), 1.0, -1.0)

        return MultiIndex(self.wstar_vector(d)[None, :], link, _unif_noise, classification=True)


@dataclass(frozen=True)
class SignClassification:
    """y = sign(x1), flipped independently with probability ``flip``."""

    flip: float = 0.0
    classification = True

    def __post_init__(self):
        if not 0.0 <= self.flip <= 0.5:
            raise ValueError("flip probability must lie in [0, 1/2]")

    def wstar_vector(self, d: int) -> np.ndarray:
        return _pad([1.0], d)

    def multi_index(self, d: int) -> MultiIndex:
        p = self.flip

        def link(eta, xi):
            s = np.where(eta[:, 0] >= 0, 1.0, -1.0)
            return np.where(xi < p, -s, s)

        return MultiIndex(self.wstar_vector(d)[None, :], link, _unif_noise, classification=True)


LabelModel = Union[WellSpecifiedLinear, MisspecifiedRegression, LogisticClassification, SignClassification, MultiIndex]


def _as_multi_index(model, d: int) -> MultiIndex:
    return model if isinstance(model, MultiIndex) else model.multi_index(d)


# --- sampling --------------------------------------------------------------

def sample_features(dist: FeatureDistribution, cov: CovarianceSpec, n: int, d: int, seed: SeedLike) -> np.ndarray:
    """n x d matrix X = Z Sigma^{1/2}, deterministic given seed."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    if cov.d != d:
        raise ValueError(f"covariance has dimension {cov.d}, expected {d}")
    Z = dist.sample(_rng(seed), (n, d))
    return cov.apply_sqrt(Z)


def sample_labels(model, X: np.ndarray, seed: SeedLike) -> np.ndarray:
    mi = _as_multi_index(model, X.shape[1])
    if mi.wstars.shape[1] != X.shape[1]:
        raise ValueError("label model dimension does not match X")
    return mi.labels(X, _rng(seed))


def sample_surrogate(model, n: int, seed: SeedLike, cov: Optional[CovarianceSpec] = None):
    """Draw (x_tilde, y_tilde) with x_tilde ~ N(0, I_{k+1}).

    y_tilde = link(eta, xi) where eta has the law of (<w_1, x>, ..., <w_k, x>)
    under Gaussian x with covariance ``cov``; with Sigma-orthonormal directions
    (or ``cov`` omitted) eta is just the first k coordinates of x_tilde.
    """
    if isinstance(model, MultiIndex):
        mi = model
    else:
        if cov is None:
            raise ValueError("need a covariance to build the index directions")
        mi = model.multi_index(cov.d)
    k = mi.k
    rng = _rng(seed)
    xt = rng.standard_normal((n, k + 1))
    if cov is None:
        eta = xt[:, :k]
    else:
        G = mi.wstars @ cov.matrix() @ mi.wstars.T
        eta = xt[:, :k] @ np.linalg.cholesky(G).T
    yt = mi.link(eta, mi.noise(rng, n))
    return xt, yt


@dataclass(eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    seed: Optional[object] = None
    model: Optional[dict] = None

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y have different row counts")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def to_csv(self, path) -> None:
        header = [f"x_{j + 1}" for j in range(self.d)] + ["y"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for xi, yi in zip(self.X, self.y):
                w.writerow([f"{v:.17g}" for v in xi] + [f"{yi:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1])


@dataclass(frozen=True, eq=False)
class DataModel:
    """Joint law of (x, y): feature distribution, covariance and label model."""

    features: FeatureDistribution
    cov: CovarianceSpec
    labels: object = field(default_factory=MisspecifiedRegression)

    @property
    def d(self) -> int:
        return self.cov.d

    @property
    def classification(self) -> bool:
        return bool(getattr(self.labels, "classification", False))

    def multi_index(self) -> MultiIndex:
        return _as_multi_index(self.labels, self.d)

    def sample(self, n: int, seed: SeedLike) -> Dataset:
        X = sample_features(self.features, self.cov, n, self.d, derive_seed(seed, 0))
        y = sample_labels(self.labels, X, derive_seed(seed, 1))
        return Dataset(X, y, seed, self.describe())

    def describe(self) -> dict:
        lab = self.labels
        lab_desc = {"kind": type(lab).__name__}
        if hasattr(lab, "__dataclass_fields__") and not isinstance(lab, MultiIndex):
            for name in lab.__dataclass_fields__:
                v = getattr(lab, name)
                lab_desc[name] = list(v) if isinstance(v, tuple) else v
        return {"features": self.features.kind.value, "cov": self.cov.describe(), "labels": lab_desc}
