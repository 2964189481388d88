import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from moreaugen.envelope import (
    AbsoluteError,
    ClosedFormUnavailable,
    DomainError,
    Hinge,
    Huber,
    HuberHinge,
    Square,
    SquaredHinge,
    ZeroOne,
    huber,
    lipschitz_gap_bound,
    loss_derivative,
    loss_value,
    moreau_closed,
    moreau_numeric,
    optimize_lambda_square_family,
    prox,
)

CLOSED = [Square(), SquaredHinge(), AbsoluteError(), Hinge()]
CONVEX = CLOSED + [Huber(0.7), HuberHinge(0.3)]


def _label(spec, y):
    return (1.0 if y >= 0 else -1.0) if spec.is_margin else y


def _grid_envelope(spec, lam, yhat, y):
    # independent oracle: bounded scalar minimization refined from a dense grid
    f0 = loss_value(spec, yhat, y)
    half = math.sqrt(f0 / lam) + 1e-12
    us = np.linspace(yhat - half, yhat + half, 20001)
    vals = loss_value(spec, us, y) + lam * (us - yhat) ** 2
    i = int(np.argmin(vals))
    lo, hi = us[max(i - 1, 0)], us[min(i + 1, us.size - 1)]
    res = minimize_scalar(lambda u: loss_value(spec, u, y) + lam * (u - yhat) ** 2, bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    return min(float(res.fun), float(vals[i]))


# --- loss values -----------------------------------------------------------

def test_loss_examples():
    assert loss_value(Square(), 2.0, 0.0) == 4.0
    assert loss_value(SquaredHinge(), 0.0, 1.0) == 1.0
    assert loss_value(AbsoluteError(), 1.3, 1.3) == 0.0
    assert loss_value(ZeroOne(), 0.0, 1.0) == 1.0


def test_margin_losses_reject_bad_labels():
    with pytest.raises(DomainError):
        loss_value(Hinge(), 0.0, 0.5)
    with pytest.raises(DomainError):
        moreau_closed(SquaredHinge(), 1.0, 0.0, 2.0)


def test_loss_spec_constants():
    assert Square().smoothness_H == 2 and SquaredHinge().smoothness_H == 2
    assert Square().sqrt_lipschitz_L == 1 and SquaredHinge().sqrt_lipschitz_L == 1
    assert AbsoluteError().lipschitz_M == 1 and Hinge().lipschitz_M == 1
    assert not ZeroOne().convex


@given(st.floats(-20, 20), st.floats(-5, 5))
def test_sqrt_lipschitz(yhat, y):
    for spec in (Square(), SquaredHinge()):
        yy = _label(spec, y)
        f = loss_value(spec, yhat, yy)
        h = 1e-6
        num = (loss_value(spec, yhat + h, yy) - loss_value(spec, yhat - h, yy)) / (2 * h)
        assert abs(num) <= 2.0 * math.sqrt(f) + 1e-4
        assert abs(loss_derivative(spec, yhat, yy)) <= 2.0 * math.sqrt(f) + 1e-12


# --- closed forms ----------------------------------------------------------

def test_closed_examples():
    assert moreau_closed(Square(), 1.0, 2.0, 0.0) == pytest.approx(2.0)
    assert moreau_closed(AbsoluteError(), 2.0, 0.1, 0.0) == pytest.approx(0.02)
    assert moreau_closed(Hinge(), 1.0, 0.0, 1.0) == pytest.approx(0.75)
    assert moreau_closed(SquaredHinge(), 3.0, 0.0, 1.0) == pytest.approx(0.75)


def test_closed_examples_match_grid_oracle():
    assert _grid_envelope(Square(), 1.0, 2.0, 0.0) == pytest.approx(2.0, abs=1e-9)
    assert _grid_envelope(Hinge(), 1.0, 0.0, 1.0) == pytest.approx(0.75, abs=1e-9)


def test_zero_loss_gives_zero_envelope():
    for spec in CLOSED:
        if spec.is_margin:
            assert moreau_closed(spec, 0.7, 1.5, 1.0) == 0.0
        else:
            assert moreau_closed(spec, 0.7, 0.4, 0.4) == 0.0


def test_unsupported_closed_forms():
    for spec in (Huber(1.0), HuberHinge(1.0), ZeroOne()):
        with pytest.raises(ClosedFormUnavailable):
            moreau_closed(spec, 1.0, 0.0, 1.0)


def test_proportionality_is_exact():
    rng = np.random.default_rng(0)
    lam = 10 ** rng.uniform(-3, 3, 500)
    yhat = rng.uniform(-10, 10, 500)
    y = rng.choice([-1.0, 1.0], 500)
    for spec in (Square(), SquaredHinge()):
        env = moreau_closed(spec, lam, yhat, y)
        np.testing.assert_allclose(env * (1 + lam) / lam, loss_value(spec, yhat, y), rtol=1e-14)


@settings(max_examples=300)
@given(st.sampled_from(range(4)), st.floats(-3, 3), st.floats(-10, 10), st.floats(-10, 10))
def test_closed_matches_independent_oracle(i, loglam, yhat, y):
    spec = CLOSED[i]
    lam = 10.0**loglam
    y = _label(spec, y)
    ref = _grid_envelope(spec, lam, yhat, y)
    assert moreau_closed(spec, lam, yhat, y) == pytest.approx(ref, abs=1e-7, rel=1e-7)


# --- prox and numeric envelope ---------------------------------------------

def test_prox_examples():
    assert prox(Square(), 1.0, 2.0, 0.0) == pytest.approx(1.0, abs=1e-10)
    assert prox(AbsoluteError(), 0.25, 3.0, 0.0) == pytest.approx(1.0, abs=1e-10)
    for spec in CONVEX:
        y = 1.0
        yhat = 2.0 if spec.is_margin else 1.0
        assert prox(spec, 0.3, yhat, y) == yhat


def test_prox_rejects_nonconvex():
    with pytest.raises(ValueError):
        prox(ZeroOne(), 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        moreau_numeric(ZeroOne(), 1.0, 0.0, 1.0)


def test_prox_golden_option_agrees():
    u = prox(Hinge(), 2.0, -0.3, 1.0, tol=1e-10, method="golden")
    assert u == pytest.approx(prox(Hinge(), 2.0, -0.3, 1.0), abs=1e-7)


def test_numeric_examples():
    assert moreau_numeric(Square(), 1.0, 2.0, 0.0) == pytest.approx(2.0, abs=1e-8)
    assert moreau_numeric(SquaredHinge(), 3.0, 0.0, 1.0) == pytest.approx(0.75, abs=1e-8)
    assert moreau_numeric(Huber(1.0), 1e8, 2.0, 0.0) == pytest.approx(1.5, abs=1e-6)


def test_numeric_is_vectorized():
    lam = np.array([0.1, 1.0, 10.0])
    out = moreau_numeric(AbsoluteError(), lam, np.array([3.0, 0.2, -1.0]), 0.0)
    np.testing.assert_allclose(out, moreau_closed(AbsoluteError(), lam, np.array([3.0, 0.2, -1.0]), 0.0), atol=1e-9)


def test_huber_identity_both_conventions():
    r = np.linspace(-3, 3, 601)
    for lam in (0.1, 0.5, 2.0, 30.0):
        delta = 1.0 / (2.0 * lam)
        env = moreau_closed(AbsoluteError(), lam, r, 0.0)
        # textbook Huber: r^2/2 inside, delta (|r| - delta/2) outside
        textbook = np.where(np.abs(r) <= delta, r * r / 2, delta * (np.abs(r) - delta / 2))
        np.testing.assert_allclose(2 * lam * textbook, env, atol=1e-14)
        # the library's slope-one Huber is textbook / delta
        np.testing.assert_allclose(huber(r, delta), env, atol=1e-14)
        np.testing.assert_allclose(loss_value(Huber(delta), r, 0.0), env, atol=1e-14)


def test_hinge_envelope_is_huber_hinge():
    yhat = np.linspace(-3, 3, 301)
    lam = 1.7
    env = moreau_closed(Hinge(), lam, yhat, -1.0)
    np.testing.assert_allclose(loss_value(HuberHinge(1 / (2 * lam)), yhat, -1.0), env, atol=1e-14)


def test_huber_envelope_numeric_vs_oracle():
    spec = Huber(0.5)
    for lam, yhat in ((0.2, 3.0), (1.0, 0.1), (5.0, -2.0)):
        assert moreau_numeric(spec, lam, yhat, 0.0) == pytest.approx(_grid_envelope(spec, lam, yhat, 0.0), abs=1e-8)


# --- lambda calculus -------------------------------------------------------

def test_lipschitz_gap_examples():
    assert lipschitz_gap_bound(1, 1) == 0.25
    assert lipschitz_gap_bound(0, 3.0) == 0.0
    assert lipschitz_gap_bound(2, 0.5) == 2.0


def test_optimize_lambda_examples():
    assert optimize_lambda_square_family(4, 1) == pytest.approx(1.0)
    assert optimize_lambda_square_family(1, 4) == 0.0
    assert optimize_lambda_square_family(2.5, 2.5) == 0.0
    lam = np.linspace(0, 100, 200001)
    assert np.max(lam / (1 + lam) * 4 - lam) == pytest.approx(1.0, abs=1e-6)


@given(st.floats(0, 50), st.floats(0, 50))
def test_optimize_lambda_upper_bounds_every_lambda(a, b):
    best = optimize_lambda_square_family(a, b)
    for lam in (0.0, 0.01, 0.5, 1.0, 3.0, 100.0):
        assert lam / (1 + lam) * a - lam * b <= best + 1e-9
