"""Penalised maximum likelihood: trust-region Newton, edf, AIC/BIC, smoothing selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .data import SurvivalDataset
from .errors import ConfigError, NumericalError
from .likelihood import Likelihood
from .margins import link_inverse
from .model import ModelDesign, ModelSpec

RIDGE_STEPS = (0.0,) + tuple(10.0 ** -k for k in range(12, -1, -1))
INIT_MIN_INCREMENT = 0.05


def chol_ridge(A: np.ndarray):
    """Cholesky factor of A + ridge*I with the smallest ridge 10^-k that works.

    Returns (L, ridge). Raises NumericalError if even ridge 1 fails.
    """
    A = 0.5 * (A + A.T)
    eye = np.eye(A.shape[0])
    for r in RIDGE_STEPS:
        try:
            return np.linalg.cholesky(A + r * eye), r
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("matrix not positive definite even after ridge 1")


def is_pd(A: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(0.5 * (A + A.T))
        return True
    except np.linalg.LinAlgError:
        return False


def _chol_inv(L: np.ndarray) -> np.ndarray:
    Li = np.linalg.solve(L, np.eye(L.shape[0]))
    return Li.T @ Li


def edf(hessian, penalty, blocks: Sequence | None = None):
    """Effective degrees of freedom xi - tr((-H + S)^-1 S).

    With ``blocks`` (objects with a ``cols`` slice) also returns the edf of
    each block, i.e. the block sums of diag(I - (-H + S)^-1 S).
    """
    H = np.asarray(hessian, dtype=float)
    S = np.asarray(penalty, dtype=float)
    L, _ = chol_ridge(-H + S)
    F = np.eye(H.shape[0]) - _chol_inv(L) @ S
    d = np.diag(F)
    total = float(d.sum())
    if blocks is None:
        return total
    return total, [float(d[b.cols].sum()) for b in blocks]


def information_criteria(loglik: float, edf_value: float, n: int) -> tuple[float, float]:
    """(AIC, BIC) = (-2l + 2 edf, -2l + edf log n)."""
    return -2.0 * loglik + 2.0 * edf_value, -2.0 * loglik + edf_value * np.log(n)


def initial_coefs(design: ModelDesign) -> np.ndarray:
    """Starting point: baselines tracking the naive empirical survival, all else 0.

    The empirical survival ignores censoring; it only has to put the start in
    a region where every record has a finite likelihood contribution.
    """
    delta = np.zeros(design.n_coef)
    for m in range(2):
        pred = design.pred[m]
        tt = np.sort(design.data.observed_times(m))
        g = pred.baseline.greville()
        surv = 1.0 - np.searchsorted(tt, g, side="right") / (len(tt) + 1.0)
        edge = 1.0 / (len(tt) + 1.0)
        surv = np.clip(surv, edge, 1.0 - edge)
        eta = link_inverse(surv, design.links[m])
        inc = np.maximum(np.diff(eta), INIT_MIN_INCREMENT) / np.diff(g)
        start = design.sl[m].start
        delta[start] = eta[0]
        delta[start + 1:start + pred.n_base] = np.log(inc)
    return delta


@dataclass
class FittedModel:
    design: ModelDesign
    coef: np.ndarray
    lambdas: np.ndarray
    penalty: np.ndarray
    loglik: float
    penalized_loglik: float
    gradient: np.ndarray            # of the penalised log-likelihood
    hessian: np.ndarray             # of the unpenalised log-likelihood
    converged: bool
    n_iter: int
    ridge: float
    edf: float
    edf_blocks: list[float]
    aic: float
    bic: float
    cov: np.ndarray                 # (-H + S + ridge I)^-1
    diagnostics: dict = field(default_factory=dict)

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.gradient))) if self.gradient.size else 0.0

    @property
    def spec(self) -> ModelSpec:
        return self.design.spec

    @property
    def coef_names(self) -> list[str]:
        return self.design.coef_names

    @property
    def n(self) -> int:
        return self.design.n

    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def coef_index(self, margin: int, covariate: str) -> int:
        """Position of a linear covariate coefficient of predictor ``margin`` (1, 2 or 3)."""
        pred = self.design.pred[margin - 1]
        if covariate not in pred.linear_pos:
            raise KeyError(f"{covariate!r} is not a linear term of eta{margin}")
        return self.design.sl[margin - 1].start + pred.linear_pos[covariate]

    def coefficient(self, margin: int, covariate: str) -> float:
        return float(self.coef[self.coef_index(margin, covariate)])


def trust_region_fit(lik: Likelihood, lambdas=None, init=None, max_iter: int = 200,
                     gtol: float = 1e-5, radius: float = 1.0) -> FittedModel:
    """Maximise the penalised log-likelihood by a trust-region Newton method.

    Each iteration solves the trust-region subproblem exactly through an
    eigendecomposition of -H_p. Convergence requires max|g_p| < gtol and a
    positive-definite -H_p. Hitting ``max_iter`` returns a non-converged fit.
    """
    design = lik.design
    lam = design.check_lambdas(lambdas)
    S = design.penalty_matrix(lam)
    x = initial_coefs(design) if init is None else np.array(init, dtype=float)
    if x.shape != (design.n_coef,):
        raise ConfigError(f"init has shape {x.shape}, expected ({design.n_coef},)")

    def objective(z, order):
        ll, g, H = lik.evaluate(z, order)
        if not np.isfinite(ll):
            return -np.inf, None, None, ll, None
        Sz = S @ z
        f = ll - 0.5 * float(z @ Sz)
        if order == 0:
            return f, None, None, ll, None
        return f, g - Sz, H - S, ll, H

    f, gp, Hp, ll, H = objective(x, 2)
    if not np.isfinite(f):
        # report which record fails at the starting point
        lik.loglik(x, strict=True)
    f0 = f
    converged = False
    message = "iteration limit reached"
    n_evals = 1
    it = 0
    for it in range(1, max_iter + 1):
        A = -Hp
        if np.max(np.abs(gp)) < gtol and is_pd(A):
            converged = True
            message = "converged"
            it -= 1
            break
        p = _tr_step(A, gp, radius)
        pnorm = float(np.linalg.norm(p))
        pred = float(gp @ p - 0.5 * p @ A @ p)
        f_new = objective(x + p, 0)[0]
        n_evals += 1
        actual = f_new - f
        noise = 1e-12 * (1.0 + abs(f))
        if not np.isfinite(f_new):
            rho = -np.inf
        elif pred <= noise:
            rho = 1.0 if actual >= -noise else -np.inf
        else:
            rho = actual / pred
        if rho < 0.25:
            radius = 0.25 * pnorm
        elif rho > 0.75 and pnorm > 0.99 * radius:
            radius = min(2.0 * radius, 1e3)
        if np.isfinite(f_new) and (rho > 1e-4 or actual >= -noise):
            x = x + p
            f, gp, Hp, ll, H = objective(x, 2)
            n_evals += 1
        if radius < 1e-12:
            message = "trust region collapsed"
            break
    return _finalize(design, x, lam, S, ll, f, gp, H, converged, it,
                     {"message": message, "n_evals": n_evals, "init_penalized_loglik": f0})


def _tr_step(A: np.ndarray, g: np.ndarray, radius: float) -> np.ndarray:
    """argmax_p g.p - p.A.p/2 subject to |p| <= radius."""
    evals, V = np.linalg.eigh(0.5 * (A + A.T))
    gt = V.T @ g
    lmin = evals[0]
    if lmin > 0:
        p = gt / evals
        if np.linalg.norm(p) <= radius:
            return V @ p
    lo = max(0.0, -lmin)

    def excess(mu):
        return np.linalg.norm(gt / (evals + mu)) - radius

    eps = 1e-12 * max(1.0, abs(lmin))
    if excess(lo + eps) > 0:
        hi = lo + np.linalg.norm(g) / radius + eps
        while excess(hi) > 0:
            hi *= 2.0
        mu = brentq(excess, lo + eps, hi, xtol=1e-12, rtol=1e-10)
        return V @ (gt / (evals + mu))
    # hard case: move to the boundary along the least-curved direction
    mu = lo + eps
    p = gt / (evals + mu)
    p[0] = 0.0 if lmin > 0 else p[0]
    rest = radius ** 2 - float(p @ p)
    if rest > 0:
        p[0] += np.sqrt(rest) * (1.0 if gt[0] >= 0 else -1.0)
    return V @ p


def _finalize(design, x, lam, S, ll, f, gp, H, converged, n_iter, diag) -> FittedModel:
    A = -H + S
    try:
        L, ridge = chol_ridge(A)
        cov = _chol_inv(L)
    except NumericalError:
        # only reachable for non-converged fits: fall back to a clipped spectrum
        ev, V = np.linalg.eigh(0.5 * (A + A.T))
        ridge = float(np.inf)
        cov = (V / np.maximum(ev, 1e-8)) @ V.T
    F = np.eye(design.n_coef) - cov @ S
    d = np.diag(F)
    e = float(d.sum())
    e_blocks = [float(d[b.cols].sum()) for b in design.blocks]
    aic, bic = information_criteria(ll, e, design.n)
    diag = dict(diag)
    diag["ridge"] = ridge
    diag["min_eigenvalue"] = float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])
    diag["grad_norm"] = float(np.max(np.abs(gp))) if gp.size else 0.0
    return FittedModel(design, x, lam, S, float(ll), float(f), gp, H, converged, n_iter,
                       ridge, e, e_blocks, aic, bic, cov, diag)


def fit_model(data: SurvivalDataset, spec: ModelSpec, lambdas=None, init=None, **kw) -> FittedModel:
    return trust_region_fit(Likelihood(ModelDesign(spec, data)), lambdas, init, **kw)


def fisher_diag(fit: FittedModel) -> np.ndarray:
    """Diagonal of the observed information -H at the estimate, never negative."""
    return np.clip(np.diag(-fit.hessian) + fit.ridge, 0.0, None)


@dataclass
class SmoothingSelection:
    lambdas: np.ndarray
    fit: FittedModel
    trials: list[dict]


def select_smoothing(lik: Likelihood, criterion: str = "AIC", grid=range(-4, 5),
                     init=None, refine: bool = True, **fit_kw) -> SmoothingSelection:
    """Coordinate-wise search of log10 lambda over ``grid`` minimising AIC or BIC.

    Each smooth term is scanned in turn with the others held fixed, then one
    half-decade refinement pass is made. Fits are warm-started from the best
    fit so far, which keeps the result deterministic for given data.
    """
    design = lik.design
    crit = criterion.upper()
    if crit not in ("AIC", "BIC"):
        raise ConfigError(f"unknown criterion {criterion!r}")
    k = design.n_smooth
    if k == 0:
        raise ConfigError("select_smoothing needs at least one smooth term")
    trials: list[dict] = []
    cache: dict[tuple, FittedModel] = {}

    def score(fit):
        return fit.aic if crit == "AIC" else fit.bic

    def run(loglam, start):
        key = tuple(np.round(loglam, 6))
        if key not in cache:
            try:
                fit = trust_region_fit(lik, 10.0 ** np.asarray(loglam), start, **fit_kw)
                trials.append({"log10_lambda": list(key), "converged": fit.converged,
                               "criterion": score(fit)})
            except NumericalError as exc:
                fit = None
                trials.append({"log10_lambda": list(key), "converged": False, "error": str(exc)})
            cache[key] = fit
        return cache[key]

    def better(a, b):
        if a is None or not a.converged:
            return False
        return b is None or not b.converged or score(a) < score(b)

    current = np.zeros(k)
    best = run(current, init)
    steps = [np.asarray(list(grid), dtype=float)]
    if refine:
        steps.append(np.array([-0.5, 0.5]))
    for stage, values in enumerate(steps):
        for j in range(k):
            center = current[j]
            cands = values if stage == 0 else center + values
            for v in cands:
                trial = current.copy()
                trial[j] = v
                start = best.coef if best is not None else init
                fit = run(trial, start)
                if better(fit, best):
                    best, current = fit, trial
    if best is None or not best.converged:
        raise NumericalError(f"no converged fit during smoothing selection: {trials}")
    return SmoothingSelection(10.0 ** current, best, trials)
