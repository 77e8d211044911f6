import numpy as np
import pytest

from brbvs.copulas import copula_cdf
from brbvs.errors import ConfigError, NumericalError
from brbvs.likelihood import Likelihood, loglik, penalized_loglik
from brbvs.margins import marginal_survival_density
from brbvs.model import ModelDesign, ModelSpec

from conftest import fd_gradient, mixed_dataset, sensible_delta

COMBOS = [(c, (a, b)) for c in ("N", "C0", "PL") for a in ("PH", "PO") for b in ("PH", "PO")]


def _spec(family, links=("PH", "PO")):
    return ModelSpec.simple(family, links, ["x1", "x2"], ["x1"], ["x3"])


def _setup(family, links=("PH", "PO"), seed=0):
    data = mixed_dataset(50, seed=seed)
    design = ModelDesign(_spec(family, links), data)
    delta = sensible_delta(design, np.random.default_rng(seed + 100))
    return data, design, Likelihood(design), delta


def _box_oracle(design, delta, i):
    """Record contribution from the joint survival function alone.

    Censored margins take differences S(l) - S(r); uncensored margins take a
    five-point -d/dt stencil, so no density or h-function is used.
    """
    d = design.data
    x = d.X[i]
    theta = float(np.exp(design.x3[i] @ delta[design.sl[2]])) if design.family.has_parameter else 1.0

    def surv(m, t):
        if t <= 0:
            return 1.0
        if np.isinf(t):
            return 0.0
        return marginal_survival_density(t, x, design.pred[m], delta[design.sl[m]],
                                         design.links[m])[0]

    stencils = []
    for m in range(2):
        lo, up = d.lower[i, m], d.upper[i, m]
        if d.status[i, m] == "U":
            h = 1e-3 * lo
            stencils.append([(lo - 2 * h, -1 / (12 * h)), (lo - h, 8 / (12 * h)),
                             (lo + h, -8 / (12 * h)), (lo + 2 * h, 1 / (12 * h))])
        else:
            stencils.append([(lo, 1.0), (up, -1.0)])
    total = sum(wa * wb * copula_cdf(surv(0, a), surv(1, b), theta, design.family)
                for a, wa in stencils[0] for b, wb in stencils[1])
    return np.log(total)


@pytest.mark.parametrize("family", ["N", "C0", "PL"])
def test_record_contributions_match_box_oracle(family):
    data, design, lik, delta = _setup(family)
    rec = lik.record_loglik(delta)
    for i in range(0, 50, 3):
        assert rec[i] == pytest.approx(_box_oracle(design, delta, i), abs=1e-5), data.status[i]


def test_independence_uncensored_factorises():
    data, design, lik, delta = _setup("N")
    rec = lik.record_loglik(delta)
    uu = np.flatnonzero((data.status == "U").all(axis=1))
    assert uu.size > 0
    for i in uu:
        f = [marginal_survival_density(data.lower[i, m], data.X[i], design.pred[m],
                                       delta[design.sl[m]], design.links[m])[1] for m in range(2)]
        assert rec[i] == pytest.approx(np.log(f[0]) + np.log(f[1]), abs=1e-12)


def test_both_right_censored_is_log_copula():
    data, design, lik, delta = _setup("C0")
    rec = lik.record_loglik(delta)
    rr = np.flatnonzero((data.status == "R").all(axis=1))
    assert rr.size > 0
    theta = np.exp(design.x3 @ delta[design.sl[2]])
    for i in rr:
        s = [marginal_survival_density(data.lower[i, m], data.X[i], design.pred[m],
                                       delta[design.sl[m]], design.links[m])[0] for m in range(2)]
        assert rec[i] == pytest.approx(np.log(copula_cdf(s[0], s[1], theta[i], "C0")), abs=1e-12)


@pytest.mark.parametrize("family,links", COMBOS)
def test_gradient_matches_finite_differences(family, links):
    _, _, lik, delta = _setup(family, links, seed=7)
    g = lik.gradient(delta)
    assert np.allclose(g, fd_gradient(lik.loglik, delta), rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("family", ["N", "C0", "PL"])
def test_hessian_matches_gradient_differences(family):
    _, _, lik, delta = _setup(family, seed=3)
    H = lik.hessian(delta)
    Hfd = lik.fd_hessian(delta)
    assert np.max(np.abs(H - Hfd)) <= 1e-5 * np.max(np.abs(H))
    assert np.allclose(H, H.T)


def test_penalized_loglik_arithmetic():
    _, design, lik, delta = _setup("C0")
    assert penalized_loglik(design, delta, 0.0) == pytest.approx(loglik(design, delta))
    S = design.penalty_matrix([2.0, 0.5])
    expected = loglik(design, delta) - 0.5 * delta @ S @ delta
    assert penalized_loglik(design, delta, [2.0, 0.5]) == pytest.approx(expected)
    assert design.penalty_matrix([1.0, 1.0]) @ np.zeros(design.n_coef) == pytest.approx(0.0)


def test_penalty_blocks_leave_linear_terms_free():
    _, design, _, _ = _setup("C0")
    S = design.penalty_matrix([1.0, 1.0])
    for name in ("eta1:x1", "eta2:x1", "eta3:x3"):
        j = design.coef_names.index(name)
        assert not S[j].any()


def test_negative_lambda_rejected():
    _, design, _, delta = _setup("C0")
    with pytest.raises(ConfigError):
        penalized_loglik(design, delta, [-1.0, 1.0])


def test_symmetric_margins_give_symmetric_gradient():
    base = mixed_dataset(40, seed=2)
    data = type(base)(np.column_stack([base.lower[:, 0]] * 2),
                      np.column_stack([base.upper[:, 0]] * 2),
                      np.column_stack([base.status[:, 0]] * 2), base.X)
    spec = ModelSpec.simple("C0", ("PO", "PO"), ["x1"], ["x1"], [])
    design = ModelDesign(spec, data)
    lik = Likelihood(design)
    delta = sensible_delta(design, np.random.default_rng(0))
    delta[design.sl[1]] = delta[design.sl[0]]
    g = lik.gradient(delta)
    assert np.allclose(g[design.sl[0]], g[design.sl[1]], rtol=1e-10, atol=1e-10)


def test_permutation_invariance():
    data, design, lik, delta = _setup("PL")
    perm = np.random.default_rng(1).permutation(data.n)
    lik2 = Likelihood(ModelDesign(design.spec, data.subset(perm)))
    assert lik2.loglik(delta) == pytest.approx(lik.loglik(delta), rel=1e-12)


def test_non_finite_contribution_names_record():
    _, design, lik, delta = _setup("C0")
    bad = delta.copy()
    bad[design.sl[0].start] = 1e6
    with pytest.raises(NumericalError, match="record"):
        lik.loglik(bad)
    assert lik.loglik(bad, strict=False) == -np.inf
    assert lik.evaluate(bad)[1] is None


def test_delta_shape_checked():
    _, _, lik, _ = _setup("N")
    with pytest.raises(ConfigError):
        lik.loglik(np.zeros(3))
