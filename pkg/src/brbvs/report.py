"""Fit summaries, survival curves and joint-survival grids."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from .copulas import CopulaFamily, copula_cdf, dependence_link, kendall_tau
from .errors import DomainError, NumericalError
from .fitting import FittedModel, is_pd
from .margins import link_eval


def _profile_row(fit: FittedModel, profile) -> np.ndarray:
    names = fit.design.data.covariate_names
    row = np.zeros(len(names))
    if profile is None:
        return row
    if isinstance(profile, dict):
        for k, v in profile.items():
            if k not in names:
                raise DomainError(f"unknown covariate {k!r} in profile")
            row[names.index(k)] = float(v)
        return row
    row[:] = np.asarray(profile, dtype=float)
    return row


def _safe_tau(theta, family):
    try:
        return float(kendall_tau(theta, family))
    except NumericalError:
        return None


def dependence_summary(fit: FittedModel, level: float = 0.95) -> dict:
    """theta and Kendall's tau at the covariate means, with a Wald interval on eta3."""
    d = fit.design
    fam = d.family
    if not fam.has_parameter:
        return {"theta": None, "tau": 0.0, "theta_interval": None, "tau_interval": None}
    xbar = d.data.X.mean(axis=0, keepdims=True)
    x3 = d.pred[2].covariate_design(xbar)[0]
    sl = d.sl[2]
    eta = float(x3 @ fit.coef[sl])
    se = float(np.sqrt(max(x3 @ fit.cov[sl, sl] @ x3, 0.0)))
    z = norm.ppf(0.5 + level / 2.0)
    th = [float(dependence_link(e)) for e in (eta, eta - z * se, eta + z * se)]
    taus = [_safe_tau(t, fam) for t in th]
    return {"eta3": eta, "eta3_se": se, "theta": th[0], "theta_interval": th[1:],
            "tau": taus[0], "tau_interval": taus[1:], "level": level}


def _record_ranges(fit: FittedModel) -> tuple[list[float], list[float]]:
    d = fit.design
    q, _ = d.predictors(fit.coef)
    surv, dens = [], []
    for m, (qa, qd) in enumerate(((0, 1), (3, 4))):
        arr = d.margins[m]
        s, _, lmg, _ = link_eval(q[:, qa], d.links[m])
        keep = ~arr.a_zero
        surv.append(s[keep])
        unc = arr.unc
        dens.append(np.exp(lmg[unc]) * q[unc, qd])
    s = np.concatenate(surv)
    f = np.concatenate(dens) if any(x.size for x in dens) else np.array([np.nan])
    return [float(s.min()), float(s.max())], [float(np.nanmin(f)), float(np.nanmax(f))]


def convergence_block(fit: FittedModel) -> dict:
    A = -fit.hessian + fit.penalty
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    prob, dens = _record_ranges(fit)
    return {
        "converged": fit.converged,
        "largest_abs_gradient": fit.grad_norm,
        "information_positive_definite": is_pd(A),
        "eigenvalue_range": [float(ev[0]), float(ev[-1])],
        "trust_region_iterations": fit.n_iter,
        "ridge": fit.ridge,
        "message": fit.diagnostics.get("message"),
        "probability_range": prob,
        "density_range": dens,
    }


def coefficient_table(fit: FittedModel) -> dict[str, list[dict]]:
    """Parametric coefficients per predictor with SE, z and two-sided p-value."""
    d = fit.design
    se = fit.se()
    out = {}
    for i, pred in enumerate(d.pred):
        rows = []
        start = d.sl[i].start
        smooth_cols = set()
        for b in pred.blocks:
            smooth_cols.update(range(b.cols.start, b.cols.stop))
        for j, name in enumerate(pred.coef_names):
            if j in smooth_cols:
                continue
            k = start + j
            est = float(fit.coef[k])
            s = float(se[k])
            z = est / s if s > 0 else float("nan")
            rows.append({"name": name.split(":", 1)[1], "estimate": est, "se": s, "z": z,
                         "p_value": float(2.0 * norm.sf(abs(z))) if np.isfinite(z) else None})
        out[f"eta{i + 1}"] = rows
    return out


def fit_report(fit: FittedModel) -> dict:
    d = fit.design
    smooth = [{"term": b.label, "edf": e, "lambda": float(l), "penalty_rank": b.rank}
              for b, e, l in zip(d.blocks, fit.edf_blocks, fit.lambdas)]
    baseline = [{"margin": m + 1, "n_basis": d.pred[m].baseline.n_basis,
                 "degree": d.pred[m].baseline.config.degree,
                 "knots": [float(k) for k in d.pred[m].baseline.knots]} for m in range(2)]
    return {
        "model": d.spec.to_dict(),
        "n": d.n,
        "loglik": fit.loglik,
        "penalized_loglik": fit.penalized_loglik,
        "edf": fit.edf,
        "aic": fit.aic,
        "bic": fit.bic,
        "coefficients": coefficient_table(fit),
        "smooth_terms": smooth,
        "dependence": dependence_summary(fit),
        "baseline_basis": baseline,
        "convergence": convergence_block(fit),
    }


def margin_eta(fit: FittedModel, margin: int, t, profile=None):
    """Predictor of margin 1/2 over times t at one covariate profile, with its gradient."""
    d = fit.design
    pred = d.pred[margin - 1]
    sl = d.sl[margin - 1]
    coefs = fit.coef[sl]
    raw, beta = pred.split(coefs)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    row = _profile_row(fit, profile)[None, :]
    xc = pred.covariate_design(row)[0]
    bc, _, _ = pred.baseline.evaluate(t)
    w = pred.raw_weights(raw)
    scale = w.copy()
    scale[0] = 1.0
    eta = bc @ w + xc @ beta
    grad = np.hstack([bc * scale, np.broadcast_to(xc, (t.size, xc.size))])
    return eta, grad


def survival_curve(fit: FittedModel, margin: int, times=None, profile=None,
                   level: float = 0.95, n_points: int = 100):
    """(t, S, lower, upper) with a pointwise delta-method band on the eta scale."""
    d = fit.design
    basis = d.pred[margin - 1].baseline
    if times is None:
        times = np.linspace(basis.lower, basis.upper, n_points)
    times = np.asarray(times, dtype=float)
    eta, grad = margin_eta(fit, margin, times, profile)
    sl = d.sl[margin - 1]
    V = fit.cov[sl, sl]
    se = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", grad, V, grad), 0.0, None))
    z = norm.ppf(0.5 + level / 2.0)
    link = d.links[margin - 1]
    s = link_eval(eta, link)[0]
    lower = link_eval(eta + z * se, link)[0]
    upper = link_eval(eta - z * se, link)[0]
    at_zero = times <= 0
    s, lower, upper = (np.where(at_zero, 1.0, a) for a in (s, lower, upper))
    return times, s, lower, upper


def joint_survival_grid(fit: FittedModel, t1, t2, profile=None) -> np.ndarray:
    """S(t1, t2 | x0) = C(S1(t1), S2(t2)) on the lattice t1 x t2 (rows follow t1)."""
    d = fit.design
    s1 = survival_curve(fit, 1, t1, profile)[1]
    s2 = survival_curve(fit, 2, t2, profile)[1]
    fam = d.family
    if fam.has_parameter:
        row = _profile_row(fit, profile)[None, :]
        eta3 = float(d.pred[2].covariate_design(row)[0] @ fit.coef[d.sl[2]])
        theta = float(dependence_link(eta3))
    else:
        theta = 1.0
    U, V = np.meshgrid(s1, s2, indexing="ij")
    return np.asarray(copula_cdf(U, V, theta, fam))
