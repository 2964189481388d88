import json
import math
import warnings

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import expit

from moreaugen.envelope import Square, SquaredHinge, ZeroOne
from moreaugen.oracles import (
    HeavyTailWarning,
    bayes_zero_one_risk,
    classification_null_risk,
    classification_pop_sq_hinge,
    expectation,
    hypercontractivity_ratio,
    mc_pop_risk,
    misspecified_optimal_predictor,
    moment_table,
    optimal_classifier,
    regression_null_risk,
    regression_pop_risk,
    zero_one_risk,
)
from moreaugen.synthdata import (
    DataModel,
    ExplicitDiagonal,
    FeatureDistribution,
    Isotropic,
    Junk,
    LogisticClassification,
    MisspecifiedRegression,
    SignClassification,
    WellSpecifiedLinear,
)


def _model(labels, cov, kind="gaussian"):
    return DataModel(FeatureDistribution(kind), cov, labels)


# --- moments ---------------------------------------------------------------

def test_gaussian_moments_analytic_vs_mc():
    # a fixed seed can sit 3 SE out by chance, so check calibration across independent seeds
    s, m, seeds = 1.3, 1_000_000, 20
    exact = moment_table("gaussian", s)
    assert exact.m_abs == pytest.approx(s * math.sqrt(2 / math.pi))
    assert exact.m_cos == pytest.approx(math.exp(-0.5 * s * s))
    x = s * np.random.default_rng(12345).standard_normal(m)  # only used for the standard errors
    funcs = [("m_abs", np.abs), ("m_sgn", lambda v: v * np.abs(v)), ("m_cos", np.cos),
             ("m_zcos", lambda v: v * np.cos(v)), ("m_cos2", lambda v: np.cos(v) ** 2)]
    tables = [moment_table("gaussian", s, method="mc", mc_samples=m, seed=k) for k in range(seeds)]
    for name, f in funcs:
        se = f(x).std() / math.sqrt(m)
        z = np.array([(getattr(t, name) - getattr(exact, name)) / se for t in tables])
        assert abs(z.mean()) * math.sqrt(seeds) <= 3.0
        assert np.mean(np.abs(z) <= 3.0) >= 0.9


@pytest.mark.parametrize("kind", ["uniform", "laplace", "rademacher", "poisson", "weibull", "lognormal", "student_t5"])
def test_quadrature_moments_vs_mc(kind):
    s = 0.8
    q = moment_table(kind, s)
    rng = np.random.default_rng(2)
    x = s * FeatureDistribution(kind).sample(rng, 2_000_000)
    for name, f in [("m_abs", np.abs), ("m_cos", np.cos), ("m_zcos", lambda v: v * np.cos(v)),
                    ("m_cos2", lambda v: np.cos(v) ** 2)]:
        vals = f(x)
        assert getattr(q, name) == pytest.approx(vals.mean(), abs=4 * vals.std() / math.sqrt(x.size) + 1e-12)


def test_expectation_normalization():
    for kind in ["gaussian", "uniform", "laplace", "student_t5", "weibull", "lognormal", "poisson", "rademacher"]:
        assert expectation(kind, lambda v: 1.0) == pytest.approx(1.0, abs=1e-9)
        assert expectation(kind, lambda v: v * v) == pytest.approx(1.0, abs=1e-7)


def test_moment_cache(tmp_path):
    path = str(tmp_path / "m.json")
    a = moment_table("laplace", 0.5, cache_path=path)
    keys = json.load(open(path))
    assert len(keys) == 1
    b = moment_table("laplace", 0.5, cache_path=path)
    assert a == b


# --- regression ------------------------------------------------------------

def test_well_specified_examples():
    m = _model(WellSpecifiedLinear(wstar=(1.0, -0.5), noise_var=0.7), ExplicitDiagonal([2.0, 1.0, 0.5]))
    w = m.labels.wstar_vector(3)
    r = regression_pop_risk(w, 0.0, m)
    assert r.value == pytest.approx(0.7) and r.method == "closed_form" and r.std_error == 0
    v = np.array([0.0, 0.0, math.sqrt(2.0)])  # ||v||_Sigma = 1
    assert regression_pop_risk(w + v, 0.0, m).value == pytest.approx(1.7)
    assert regression_null_risk(m) == pytest.approx(0.7 + 2.0 + 0.25)


def test_misspecified_pythagoras_and_first_order_condition():
    cov = ExplicitDiagonal([1.5, 0.7, 1.0, 0.3])
    m = _model(MisspecifiedRegression(), cov)
    wt, risk = misspecified_optimal_predictor(m)
    assert regression_pop_risk(wt, 0.0, m).value == pytest.approx(risk)
    v = np.array([0.0, 0.0, 0.0, 1 / math.sqrt(0.3)])
    assert regression_pop_risk(wt + v, 0.0, m).value == pytest.approx(risk + 1.0)
    ds = m.sample(1_000_000, 3)
    g = ds.X * (ds.X @ wt - ds.y)[:, None]
    se = g.std(axis=0) / 1000
    assert np.all(np.abs(g.mean(axis=0)) <= 4 * se)


def test_misspecified_moments_use_scaled_coordinates():
    # the correction weights come from moments of x = sqrt(Sigma_ii) z, checked by 1-D quadrature
    cov = ExplicitDiagonal([4.0, 0.25, 1.0])
    m = _model(MisspecifiedRegression(), cov, kind="weibull")
    wt, _ = misspecified_optimal_predictor(m)
    s1, s2 = 2.0, 0.5
    m_sgn = expectation("weibull", lambda v: v * abs(v), s1)
    m_abs = expectation("weibull", abs, s1)
    m_cos = expectation("weibull", math.cos, s2)
    m_zcos = expectation("weibull", lambda v: v * math.cos(v), s2)
    assert wt[0] == pytest.approx(1.5 + m_sgn * m_cos / 4.0)
    assert wt[1] == pytest.approx(m_abs * m_zcos / 0.25)
    assert m_zcos != 0  # a skewed coordinate makes the e2 correction live


def test_linear_link_gives_wstar():
    m = _model(WellSpecifiedLinear(wstar=(0.3, 2.0)), Junk(10))
    w = m.labels.wstar_vector(10)
    assert regression_pop_risk(w, 0.0, m).value == pytest.approx(m.labels.sigma_sq)


@pytest.mark.parametrize("kind", ["gaussian", "uniform", "rademacher"])
def test_regression_closed_form_vs_mc(kind):
    rng = np.random.default_rng(4)
    cov = ExplicitDiagonal(rng.uniform(0.2, 1.5, 6))
    m = _model(MisspecifiedRegression(), cov, kind)
    for i in range(3):
        w = rng.normal(0, 0.7, 6)
        b = rng.normal(0, 0.3)
        cf = regression_pop_risk(w, b, m).value
        mc = mc_pop_risk(Square(), w, b, m, n_mc=1_000_000, seed=10 + i)
        assert cf == pytest.approx(mc.value, abs=3 * mc.std_error)


def test_regression_stack_and_null_with_intercept():
    m = _model(MisspecifiedRegression(), Junk(8))
    W = np.random.default_rng(5).normal(size=(4, 8))
    vals = regression_pop_risk(W, np.zeros(4), m).value
    np.testing.assert_allclose(vals, [regression_pop_risk(w, 0.0, m).value for w in W])
    null0 = regression_null_risk(m)
    null1 = regression_null_risk(m, with_intercept=True)
    ey = m.labels.scale * 0 + math.sqrt(2 / math.pi) * math.exp(-0.5)  # E|x1| E cos x2
    assert null0 - null1 == pytest.approx(ey**2)


def test_mc_zero_predictor_is_label_second_moment():
    m = _model(WellSpecifiedLinear(wstar=(0.0,), noise_var=1.0), Isotropic(3))
    r = mc_pop_risk(Square(), np.zeros(3), 0.0, m, n_mc=400_000, seed=1)
    assert r.value == pytest.approx(1.0, abs=4 * r.std_error)
    assert r.method == "monte_carlo"
    with pytest.raises(ValueError):
        mc_pop_risk(Square(), np.zeros(3), 0.0, m, n_mc=0)


# --- classification --------------------------------------------------------

LOGI = _model(LogisticClassification(), Junk(20, k=1))


def test_sq_hinge_trivial_cases():
    assert classification_pop_sq_hinge(np.zeros(20), 0.0, LOGI, method="quad").value == pytest.approx(1.0)
    w = 0.3 * LOGI.labels.wstar_vector(20)
    mc = classification_pop_sq_hinge(w, 0.2, LOGI, n_mc=2_000_000, seed=1)
    q = classification_pop_sq_hinge(w, 0.2, LOGI, method="quad")
    assert q.value == pytest.approx(mc.value, abs=3 * mc.std_error)


def test_sq_hinge_reduction_vs_direct_mc():
    rng = np.random.default_rng(6)
    for i in range(4):
        w = rng.normal(0, 0.4, 20)
        b = rng.normal(0, 0.5)
        red = classification_pop_sq_hinge(w, b, LOGI, method="quad").value
        direct = mc_pop_risk(SquaredHinge(), w, b, LOGI, n_mc=1_000_000, seed=20 + i)
        assert red == pytest.approx(direct.value, rel=0.02)
        assert red == pytest.approx(direct.value, abs=4 * direct.std_error)


def test_sq_hinge_rotated_covariance():
    U, _ = np.linalg.qr(np.random.default_rng(7).standard_normal((5, 5)))
    m = _model(LogisticClassification(wstar_coef=2.0, bstar=-0.5), ExplicitDiagonal([1.0, 2.0, 0.5, 0.3, 0.1], U))
    w = np.random.default_rng(8).normal(size=5)
    red = classification_pop_sq_hinge(w, 0.1, m, method="quad").value
    direct = mc_pop_risk(SquaredHinge(), w, 0.1, m, n_mc=1_000_000, seed=3)
    assert red == pytest.approx(direct.value, abs=4 * direct.std_error)


def test_zero_one_examples():
    sign = _model(SignClassification(), Isotropic(3))
    e1 = np.eye(3)[0]
    assert zero_one_risk(e1, 0.0, sign).value == pytest.approx(0.0, abs=1e-10)
    assert zero_one_risk(-e1, 0.0, sign).value == pytest.approx(1.0, abs=1e-10)
    flip = _model(SignClassification(flip=0.1), Isotropic(3))
    assert zero_one_risk(e1, 0.0, flip).value == pytest.approx(0.1, abs=1e-10)
    # the Bayes rule of the logistic model attains the Bayes risk
    w = LOGI.labels.wstar_vector(20)
    bayes = bayes_zero_one_risk(LOGI)
    assert zero_one_risk(w, 3.0, LOGI).value == pytest.approx(bayes, abs=1e-9)
    ref = integrate.quad(lambda u: min(expit(5 * u + 3), 1 - expit(5 * u + 3)) * stats.norm.pdf(u), -12, 12,
                         points=[-0.6], limit=200)[0]
    assert bayes == pytest.approx(ref, abs=1e-8)


def test_zero_one_below_sq_hinge_and_vs_mc():
    rng = np.random.default_rng(9)
    for i in range(5):
        w = rng.normal(0, 0.5, 20)
        b = rng.normal(0, 0.5)
        zo = zero_one_risk(w, b, LOGI).value
        assert zo <= classification_pop_sq_hinge(w, b, LOGI, method="quad").value
    mc = mc_pop_risk(ZeroOne(), w, b, LOGI, n_mc=1_000_000, seed=4)
    assert zo == pytest.approx(mc.value, abs=4 * mc.std_error)


def test_classification_null_risk():
    p = integrate.quad(lambda u: expit(5 * u + 3) * stats.norm.pdf(u), -12, 12)[0]
    assert classification_null_risk(LOGI) == pytest.approx(4 * p * (1 - p), abs=1e-9)
    # the null risk is the best intercept-only squared-hinge risk
    vals = [classification_pop_sq_hinge(np.zeros(20), b, LOGI, method="quad").value for b in np.linspace(-1, 1, 201)]
    assert min(vals) == pytest.approx(classification_null_risk(LOGI), abs=1e-4)


def test_alignment_property():
    rng = np.random.default_rng(10)
    for _ in range(5):
        w = rng.normal(size=20)
        b = rng.normal()
        wpar = np.zeros(20)
        wpar[0] = w[0]
        assert classification_pop_sq_hinge(wpar, b, LOGI, method="quad").value <= \
            classification_pop_sq_hinge(w, b, LOGI, method="quad").value


def test_optimal_classifier():
    m = _model(LogisticClassification(), Junk(5, k=1))
    w, b, risk = optimal_classifier(m, n_steps=1_000_000, seed=1)
    assert np.all(w[1:] == 0)
    grid = [classification_pop_sq_hinge(np.array([a, 0, 0, 0, 0]), c, m, method="quad").value
            for a in np.linspace(0.2, 1.2, 21) for c in np.linspace(-0.2, 1.0, 25)]
    assert risk <= min(grid) + 2e-3


# --- hypercontractivity ----------------------------------------------------

def test_hypercontractivity_gaussian_square():
    m = _model(WellSpecifiedLinear(wstar=(0.0,), noise_var=1.0), Isotropic(2))
    q8 = hypercontractivity_ratio(Square(), np.zeros(2), 0.0, m, q=8, n_mc=2_000_000, seed=1)
    assert q8 == pytest.approx(105 ** 0.25, rel=0.03)
    q4 = hypercontractivity_ratio(Square(), np.zeros(2), 0.0, m, q=4, n_mc=2_000_000, seed=1)
    assert q4 == pytest.approx(105 ** 0.25, rel=0.05)  # (E g^8)^(1/4) / E g^2


def test_hypercontractivity_constant_loss():
    m = _model(SignClassification(), Isotropic(2))
    assert hypercontractivity_ratio(SquaredHinge(), np.zeros(2), 0.0, m, n_mc=1000) == pytest.approx(1.0)


@pytest.mark.parametrize("eta", [0.05, 0.2])
def test_hypercontractivity_rcn_ceiling(eta):
    m = _model(SignClassification(flip=eta), Isotropic(2))
    # the ceiling bounds the root-loss ratio; the q = 8 value is that ratio squared
    ceiling = (4 / math.sqrt(eta)) ** 2
    assert hypercontractivity_ratio(SquaredHinge(), np.zeros(2), 0.0, m, q=8, n_mc=10_000) <= ceiling
    rng = np.random.default_rng(2)
    for i in range(5):
        w = rng.normal(0, 3, 2)
        r = hypercontractivity_ratio(SquaredHinge(), w, rng.normal(), m, q=8, n_mc=1_000_000, seed=i)
        assert r <= ceiling


def test_hypercontractivity_warns_on_heavy_tails():
    m = _model(WellSpecifiedLinear(wstar=(1.0,), noise_var=0.0), Isotropic(2), kind="lognormal")
    with pytest.warns(HeavyTailWarning):
        hypercontractivity_ratio(Square(), np.zeros(2), 0.0, m, n_mc=20_000, seed=0)
    with pytest.raises(ValueError):
        hypercontractivity_ratio(Square(), np.zeros(2), 0.0, m, q=6)
