import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from brbvs.errors import ConfigError, DomainError
from brbvs.margins import (MonotoneBasis, MonotoneSplineConfig, Predictor, PredictorSpec,
                           PSplineBasis, PSplineConfig, SurvivalLink, difference_penalty_value,
                           eta_eval, link_inverse, link_survival, link_survival_deriv,
                           marginal_survival_density, monotone_basis, monotone_coefs)

TIMES = np.random.default_rng(1).weibull(1.3, 300) * 3.0


def test_link_values():
    assert link_survival(0.0, "PO") == pytest.approx(0.5)
    assert link_survival(0.0, "PH") == pytest.approx(np.exp(-1.0))
    assert link_survival(50.0, "PH") < 1e-10
    assert link_survival(-50.0, "PH") > 1 - 1e-10


@pytest.mark.parametrize("link", ["PH", "PO"])
def test_links_strictly_decreasing(link):
    eta = np.sort(np.random.default_rng(0).uniform(-5, 3, 1001))
    eta = eta[np.diff(eta, prepend=-np.inf) > 1e-9]
    s = link_survival(eta, link)
    assert np.all(np.diff(s) < 0)
    assert np.all(link_survival_deriv(eta, link) < 0)


@pytest.mark.parametrize("link", ["PH", "PO"])
def test_link_derivative_and_inverse(link):
    eta = np.linspace(-4, 2, 13)
    h = 1e-6
    fd = (link_survival(eta + h, link) - link_survival(eta - h, link)) / (2 * h)
    assert np.allclose(link_survival_deriv(eta, link), fd, rtol=1e-6, atol=1e-10)
    s = link_survival(eta, link)
    assert np.allclose(link_inverse(s, SurvivalLink.parse(link)), eta, atol=1e-8)


def test_unknown_link():
    with pytest.raises(DomainError):
        SurvivalLink.parse("AFT")


def test_partition_of_unity():
    basis = MonotoneBasis(TIMES)
    t = np.linspace(basis.lower, basis.upper, 200)
    b, _, clamped = basis.basis(t)
    assert not clamped.any()
    assert np.allclose(b.sum(axis=1), 1.0, atol=1e-12)


def test_knots_increasing_and_positive():
    basis = MonotoneBasis(TIMES)
    assert basis.lower > 0
    assert np.all(np.diff(np.unique(basis.knots)) > 0)


def test_basis_derivative_finite_difference():
    cfg = MonotoneSplineConfig()
    t = np.linspace(0.3, 4.0, 25)
    h = 1e-6
    _, db, _ = monotone_basis(t, cfg, TIMES)
    bp = monotone_basis(t + h, cfg, TIMES)[0]
    bm = monotone_basis(t - h, cfg, TIMES)[0]
    assert np.allclose(db, (bp - bm) / (2 * h), atol=1e-6)


def test_clamp_below_boundary():
    basis = MonotoneBasis(TIMES)
    b, db, clamped = basis.basis([basis.lower / 2])
    assert clamped[0]
    assert np.allclose(b, basis.basis([basis.lower])[0])
    assert np.all(db == 0)


def test_too_few_basis_functions():
    with pytest.raises(ConfigError):
        MonotoneSplineConfig(n_basis=4)


def test_monotone_coefs_examples():
    assert np.allclose(monotone_coefs([0.0, 0.0, 0.0]), [0.0, 1.0, 2.0])
    c = monotone_coefs([1.0, -40.0, -40.0])
    assert np.allclose(c, 1.0)


@given(arrays(float, 10, elements=st.floats(-8, 3)))
def test_monotone_coefs_increasing(raw):
    assert np.all(np.diff(monotone_coefs(raw)) > 0)


@given(arrays(float, 10, elements=st.floats(-4, 2)))
def test_tail_sum_basis_matches_coefficients(raw):
    basis = MonotoneBasis(TIMES)
    t = np.linspace(0.1, 5, 30)
    bc, _, _ = basis.evaluate(t)
    b, _, _ = basis.basis(t)
    gamma = monotone_coefs(raw + np.log(basis.spacing))
    assert np.allclose(bc @ Predictor.raw_weights(raw.copy()), b @ gamma, atol=1e-9)


def test_penalty_rank_and_null_space():
    basis = MonotoneBasis(TIMES)
    P = basis.penalty()
    assert np.linalg.matrix_rank(P) == basis.n_basis - 2
    r = np.concatenate([[0.3], np.full(9, -0.7)])
    assert r @ P @ r == pytest.approx(0.0, abs=1e-14)
    # the null space is a baseline linear in time
    t = np.linspace(basis.lower, basis.upper, 40)
    eta = basis.evaluate(t)[0] @ Predictor.raw_weights(r.copy())
    assert np.allclose(np.diff(eta, 2), 0.0, atol=1e-12)


def test_pspline_penalty_affine_null():
    assert difference_penalty_value(2.0 + 0.5 * np.arange(8)) == pytest.approx(0.0, abs=1e-20)
    assert difference_penalty_value([0, 1, 0, 1]) > 0
    x = np.random.default_rng(0).uniform(size=100)
    ps = PSplineBasis(x, PSplineConfig())
    assert ps.design(x).mean(axis=0) == pytest.approx(np.zeros(ps.n_coef), abs=1e-12)


def _predictor(linear=(), baseline=True):
    X = np.random.default_rng(3).normal(size=(300, 2))
    spec = PredictorSpec(baseline=MonotoneSplineConfig() if baseline else None, linear=list(linear))
    return Predictor(spec, X, ["x1", "x2"], times=TIMES if baseline else None)


def test_intercept_only_predictor():
    pred = _predictor(baseline=False)
    assert eta_eval(1.0, [0.0, 0.0], pred, np.array([0.8])) == (0.8, 0.0)


@given(arrays(float, 10, elements=st.floats(-3, 1)))
def test_baseline_eta_nondecreasing(raw):
    pred = _predictor()
    t = np.linspace(0.05, 6, 50)
    eta, deta = pred.eta(t, np.zeros((50, 2)), raw)
    assert np.all(np.diff(eta) >= -1e-12)
    assert np.all(deta >= 0)


def test_linear_term_adds():
    pred = _predictor(linear=["x1"])
    raw = np.linspace(-2, -1, 10)
    coefs = np.append(raw, 1.7)
    base = eta_eval(1.2, [0.0, 0.0], pred, coefs)[0]
    assert eta_eval(1.2, [2.0, 5.0], pred, coefs)[0] == pytest.approx(base + 3.4)


def test_coefficient_length_checked():
    with pytest.raises(DomainError):
        _predictor().eta(1.0, [[0, 0]], np.zeros(3))


@pytest.mark.parametrize("link", ["PH", "PO"])
def test_density_matches_survival_difference(link):
    pred = _predictor(linear=["x2"])
    rng = np.random.default_rng(5)
    coefs = np.append(np.concatenate([[-3.0], rng.normal(-0.5, 0.3, 9)]), 0.4)
    h = 1e-6
    for t in rng.uniform(0.2, 5.0, 20):
        x = rng.normal(size=2)
        s, f = marginal_survival_density(t, x, pred, coefs, link)
        sp = marginal_survival_density(t + h, x, pred, coefs, link)[0]
        sm = marginal_survival_density(t - h, x, pred, coefs, link)[0]
        assert 0 < s < 1 and f >= 0
        assert f == pytest.approx(-(sp - sm) / (2 * h), rel=1e-5, abs=1e-9)


def test_flat_baseline_zero_density():
    pred = _predictor()
    coefs = np.concatenate([[0.0], np.full(9, -800.0)])
    assert marginal_survival_density(1.0, [0, 0], pred, coefs, "PO")[1] == pytest.approx(0.0)


def test_predictor_spec_round_trip():
    spec = PredictorSpec(baseline=MonotoneSplineConfig(), linear=["x1"],
                         smooth=[("x2", PSplineConfig())])
    again = PredictorSpec.from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()
    with pytest.raises(ConfigError):
        PredictorSpec.from_dict([{"type": "tensor"}])
