import numpy as np
import pytest

from brbvs.copulas import conditional_inverse
from brbvs.data import SurvivalDataset
from brbvs.errors import ConfigError
from brbvs.fitting import (edf, fisher_diag, fit_model, information_criteria, initial_coefs,
                           select_smoothing, trust_region_fit)
from brbvs.likelihood import Likelihood
from brbvs.model import ModelDesign, ModelSpec
from brbvs.simulate import ScenarioConfig, baseline_s10, simulate_dataset
from scipy.optimize import brentq

from conftest import mixed_dataset


def _lik(data, spec):
    return Likelihood(ModelDesign(spec, data))


@pytest.fixture(scope="module")
def scenario_fit():
    data = simulate_dataset(ScenarioConfig(n=400, p=4), 11)
    spec = ModelSpec.simple("C0", ("PH", "PO"), ["x1", "x2"], ["x1", "x3"], ["x1", "x2", "x3"])
    return fit_model(data, spec)


def test_edf_unpenalised_is_dimension():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    H = -(a @ a.T + 6 * np.eye(6))
    assert edf(H, np.zeros((6, 6))) == pytest.approx(6.0, abs=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.5, 3.0, 1e4])
def test_edf_diagonal_toy(lam):
    xi = 5
    assert edf(-np.eye(xi), lam * np.eye(xi)) == pytest.approx(xi * (1 - lam / (1 + lam)))


def test_extra_free_parameter_adds_two_to_aic():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(4, 4))
    H = -(a @ a.T + np.eye(4))
    S = np.diag([0.0, 2.0, 2.0, 0.0])
    H5 = np.zeros((5, 5))
    H5[:4, :4] = H
    H5[4, 4] = -3.0
    S5 = np.zeros((5, 5))
    S5[:4, :4] = S
    aic4 = information_criteria(-100.0, edf(H, S), 50)[0]
    aic5 = information_criteria(-100.0, edf(H5, S5), 50)[0]
    assert aic5 - aic4 == pytest.approx(2.0, abs=1e-12)


def test_bic_equals_aic_at_e_squared():
    aic, bic = information_criteria(-12.3, 4.7, np.exp(2.0))
    assert bic == pytest.approx(aic)


def test_scenario_fit_recovers_truth(scenario_fit):
    f = scenario_fit
    assert f.converged and f.grad_norm < 1e-5
    assert abs(f.coefficient(1, "x1") + 1.5) < 0.4
    assert np.all(np.linalg.eigvalsh(-f.hessian + f.penalty) > 0)


def test_ascent_property(scenario_fit):
    f = scenario_fit
    assert f.penalized_loglik >= f.diagnostics["init_penalized_loglik"]


def test_fisher_diag_nonnegative(scenario_fit):
    assert np.all(fisher_diag(scenario_fit) >= 0)


def test_fit_report_fields(scenario_fit):
    f = scenario_fit
    assert f.aic == pytest.approx(-2 * f.loglik + 2 * f.edf)
    assert f.bic == pytest.approx(-2 * f.loglik + f.edf * np.log(f.n))
    assert sum(f.edf_blocks) < f.edf
    assert len(f.se()) == f.design.n_coef
    with pytest.raises(KeyError):
        f.coef_index(1, "x3")


def test_small_baseline_only_dataset_converges():
    rng = np.random.default_rng(2)
    data = SurvivalDataset.from_times(rng.exponential(size=30), rng.exponential(size=30))
    f = fit_model(data, ModelSpec.simple("N", ("PH", "PH"), n_basis=6))
    assert f.converged and f.grad_norm < 1e-5


def test_iteration_cap_gives_unconverged_fit():
    data = mixed_dataset(60, seed=1)
    f = fit_model(data, ModelSpec.simple("C0", ("PH", "PO"), ["x1"], ["x1"]), max_iter=2)
    assert not f.converged
    assert f.diagnostics["message"] == "iteration limit reached"


def test_init_shape_checked():
    lik = _lik(mixed_dataset(40), ModelSpec.simple("N"))
    with pytest.raises(ConfigError):
        trust_region_fit(lik, init=np.zeros(2))


def test_initial_coefficients_finite():
    lik = _lik(mixed_dataset(40), ModelSpec.simple("PL", ("PO", "PH"), ["x1"], ["x2"]))
    assert np.isfinite(lik.loglik(initial_coefs(lik.design)))


def test_edf_non_increasing_in_lambda():
    lik = _lik(mixed_dataset(120, seed=3), ModelSpec.simple("C0", ("PH", "PO"), ["x1"], ["x1"]))
    values = []
    init = None
    for lam in np.logspace(-2, 4, 5):
        f = trust_region_fit(lik, [lam, 1.0], init)
        init = f.coef
        values.append(f.edf_blocks[0])
    assert np.all(np.diff(values) <= 1e-8)


def test_edf_limits_on_fit():
    lik = _lik(mixed_dataset(120, seed=3), ModelSpec.simple("C0", ("PH", "PO"), ["x1"], ["x1"]))
    f0 = trust_region_fit(lik, [0.0, 0.0])
    xi = lik.design.n_coef
    assert f0.edf == pytest.approx(xi, abs=1e-9)
    big = trust_region_fit(lik, [1e8, 1e8], f0.coef)
    zeta = sum(b.rank for b in lik.design.blocks)
    assert big.edf == pytest.approx(xi - zeta, abs=0.1)


def test_fisher_information_grows_linearly():
    diags = []
    for n in (300, 600):
        rng = np.random.default_rng(n)
        data = SurvivalDataset.from_times(rng.exponential(size=n), rng.exponential(size=n))
        f = fit_model(data, ModelSpec.simple("N", ("PH", "PH")), lambdas=[1e6, 1e6])
        diags.append(fisher_diag(f)[0])
    assert diags[1] / diags[0] == pytest.approx(2.0, rel=0.15)


def test_duplicated_data_doubles_information():
    data = simulate_dataset(ScenarioConfig(n=200, p=3), 5)
    doubled = data.subset(np.repeat(np.arange(data.n), 2))
    spec = ModelSpec.simple("C0", ("PH", "PO"), ["x1"], ["x1"], [])
    f1 = fit_model(data, spec, lambdas=[1.0, 1.0])
    # the penalty doubles with the data, so the optimum is unchanged
    f2 = fit_model(doubled, spec, lambdas=[2.0, 2.0], init=f1.coef)
    assert np.allclose(f2.coef, f1.coef, atol=1e-6)
    assert np.allclose(fisher_diag(f2), 2 * fisher_diag(f1), rtol=1e-6)


def test_clayton_beats_independence_on_dependent_data():
    rng = np.random.default_rng(4)
    u, w = rng.uniform(size=(2, 500))
    v = conditional_inverse(u, w, 2.0, "C0")      # tau = 0.5
    data = SurvivalDataset.from_times(-np.log(u), -2.0 * np.log(v))
    aic = {fam: fit_model(data, ModelSpec.simple(fam, ("PH", "PH"))).aic for fam in ("N", "C0")}
    assert aic["C0"] < aic["N"]


def _times_from(surv_inverse, n, seed):
    rng = np.random.default_rng(seed)
    return SurvivalDataset.from_times(*[surv_inverse(rng.uniform(size=n)) for _ in range(2)])


def test_steep_baseline_selects_small_lambda():
    inv = np.vectorize(lambda u: brentq(lambda t: baseline_s10(t) - u, 1e-9, 500.0))
    data = _times_from(inv, 400, 0)
    sel = select_smoothing(_lik(data, ModelSpec.simple("N", ("PH", "PH"))))
    assert np.all(sel.lambdas < 1.0)


def test_linear_baseline_has_small_edf():
    # PH with log cumulative hazard -8 + t: the baseline predictor is linear in time
    inv = lambda u: np.log(-np.log(u)) + 8.0
    data = _times_from(inv, 400, 0)
    sel = select_smoothing(_lik(data, ModelSpec.simple("N", ("PH", "PH"))))
    assert max(sel.fit.edf_blocks) <= 3.0


def test_smoothing_selection_deterministic():
    data = mixed_dataset(100, seed=9)
    spec = ModelSpec.simple("C0", ("PH", "PO"), ["x1"], ["x1"])
    a = select_smoothing(_lik(data, spec), refine=False)
    b = select_smoothing(_lik(data, spec), refine=False)
    assert np.array_equal(a.lambdas, b.lambdas)
    assert a.fit.aic == b.fit.aic


def test_smoothing_selection_needs_smooth_term():
    data = mixed_dataset(40)
    lik = _lik(data, ModelSpec.simple("N"))
    with pytest.raises(ConfigError):
        select_smoothing(lik, criterion="GCV")
