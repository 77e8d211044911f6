"""Link-based marginal survival models.

A margin is S(t | x) = G(eta(t, x)) where G is a survival link and eta is an
additive predictor containing a monotone B-spline baseline of time plus
linear and penalised-spline covariate effects. The baseline coefficients are
reparameterised as a cumulative sum of exponentials, so eta is
non-decreasing in t for every parameter value and S is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.interpolate import BSpline
from scipy.special import expit, log_expit

from .copulas import U_EPS
from .errors import ConfigError, DomainError

ETA_CLIP = 40.0


class SurvivalLink(str, Enum):
    PH = "PH"
    PO = "PO"

    @classmethod
    def parse(cls, value: "SurvivalLink | str") -> "SurvivalLink":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise DomainError(f"unknown survival link {value!r}; expected PH or PO") from None


def link_eval(eta, link: SurvivalLink):
    """Return (S, dS/deta, log(-G'(eta)), d/deta log(-G'(eta))).

    S is clamped to [U_EPS, 1 - U_EPS]; dS/deta is set to 0 where the clamp
    is active so value and derivative stay consistent.
    """
    e = np.clip(np.asarray(eta, dtype=float), -ETA_CLIP, ETA_CLIP)
    if link is SurvivalLink.PH:
        ee = np.exp(e)
        s = np.exp(-ee)
        ds = -ee * s
        lmg = e - ee
        dlmg = 1.0 - ee
    else:
        s = expit(-e)
        ds = -s * (1.0 - s)
        lmg = log_expit(-e) + log_expit(e)
        dlmg = 2.0 * s - 1.0
    clamped = (s < U_EPS) | (s > 1.0 - U_EPS)
    if np.any(clamped):
        s = np.clip(s, U_EPS, 1.0 - U_EPS)
        ds = np.where(clamped, 0.0, ds)
    return s, ds, lmg, dlmg


def link_survival(eta, link) -> float | np.ndarray:
    """G(eta): PH is exp(-exp(eta)), PO is 1 / (1 + exp(eta))."""
    link = SurvivalLink.parse(link)
    s = link_eval(eta, link)[0]
    return float(s) if np.ndim(eta) == 0 else s


def link_survival_deriv(eta, link) -> float | np.ndarray:
    """G'(eta), always negative."""
    link = SurvivalLink.parse(link)
    e = np.clip(np.asarray(eta, dtype=float), -ETA_CLIP, ETA_CLIP)
    d = -np.exp(link_eval(e, link)[2])
    return float(d) if np.ndim(eta) == 0 else d


def link_inverse(s, link: SurvivalLink):
    """eta such that G(eta) = s."""
    s = np.clip(np.asarray(s, dtype=float), U_EPS, 1.0 - U_EPS)
    if link is SurvivalLink.PH:
        return np.log(-np.log(s))
    return np.log1p(-s) - np.log(s)


# --------------------------------------------------------------------------
# spline bases
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MonotoneSplineConfig:
    n_basis: int = 10
    degree: int = 3
    penalty_order: int = 2
    pad: float = 0.01

    def __post_init__(self):
        if self.n_basis < self.degree + 2:
            raise ConfigError(
                f"monotone baseline needs at least degree+2={self.degree + 2} basis functions, "
                f"got n_basis={self.n_basis}"
            )


@dataclass(frozen=True)
class PSplineConfig:
    n_basis: int = 8
    degree: int = 3
    penalty_order: int = 2

    def __post_init__(self):
        if self.n_basis < self.degree + 2:
            raise ConfigError(f"P-spline needs at least {self.degree + 2} basis functions")
        if self.penalty_order >= self.n_basis:
            raise ConfigError("penalty order must be smaller than the basis dimension")


def difference_matrix(k: int, order: int) -> np.ndarray:
    return np.diff(np.eye(k), n=order, axis=0)


def _clamped_knots(lo: float, hi: float, interior: np.ndarray, degree: int) -> np.ndarray:
    return np.concatenate([np.full(degree + 1, lo), interior, np.full(degree + 1, hi)])


class MonotoneBasis:
    """Cubic B-spline basis of time with quantile interior knots.

    ``evaluate`` returns the tail-sum basis ``Bc[:, j] = h_j * sum_{k >= j} B[:, k]``
    and its time derivative, where ``h_j`` is the spacing of consecutive
    Greville abscissae (``h_0 = 1``). With ``w = (r0, exp(r1), ..., exp(r_{K-1}))``
    the baseline is ``Bc @ w``, identical to ``B @ monotone_coefs(r + log h)``.
    Constant ``r[1:]`` therefore gives a baseline exactly linear in time,
    which is the null space of the penalty.
    """

    def __init__(self, times: np.ndarray, config: MonotoneSplineConfig | None = None):
        config = config or MonotoneSplineConfig()
        t = np.asarray(times, dtype=float)
        t = t[np.isfinite(t) & (t > 0)]
        if t.size < 2 or np.ptp(t) <= 0:
            raise ConfigError("monotone baseline needs at least two distinct positive times")
        self.config = config
        k = config.degree
        n_int = config.n_basis - k - 1
        span = float(np.ptp(t))
        # relative padding on the left keeps the boundary positive and close to the data
        self.lower = float(t.min() * (1.0 - config.pad))
        self.upper = float(t.max() + config.pad * span)
        probs = np.arange(1, n_int + 1) / (n_int + 1)
        interior = np.quantile(t, probs, method="inverted_cdf")
        if n_int > 0 and (np.any(np.diff(interior) <= 1e-10 * span)
                          or interior[0] <= self.lower or interior[-1] >= self.upper):
            interior = np.linspace(self.lower, self.upper, n_int + 2)[1:-1]
        self.knots = _clamped_knots(self.lower, self.upper, interior, k)
        self._spline = BSpline(self.knots, np.eye(config.n_basis), k, extrapolate=False)
        self._dspline = self._spline.derivative()
        self.spacing = np.concatenate([[1.0], np.diff(self.greville())])

    @property
    def n_basis(self) -> int:
        return self.config.n_basis

    def greville(self) -> np.ndarray:
        k = self.config.degree
        return np.array([self.knots[i + 1:i + k + 1].mean() for i in range(self.n_basis)])

    def basis(self, t):
        """Plain B-spline values and time derivatives, plus a clamp flag per point."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        clamped = (t < self.lower) | (t > self.upper)
        tc = np.clip(t, self.lower, self.upper)
        b = self._spline(tc)
        db = self._dspline(tc)
        # extrapolate=False yields nan exactly at the right end of some versions
        b = np.nan_to_num(b)
        db = np.nan_to_num(db)
        db[clamped] = 0.0
        return b, db, clamped

    def evaluate(self, t):
        b, db, clamped = self.basis(t)
        bc = np.cumsum(b[:, ::-1], axis=1)[:, ::-1]
        dbc = np.cumsum(db[:, ::-1], axis=1)[:, ::-1]
        dbc[:, 0] = 0.0
        return bc * self.spacing, dbc * self.spacing, clamped

    def penalty(self) -> np.ndarray:
        """Squared first differences of the log-slopes r[1:].

        Zero exactly when the spline coefficients are affine in the Greville
        abscissae, i.e. when the baseline is linear in time.
        """
        k = self.n_basis
        dm = difference_matrix(k - 1, self.config.penalty_order - 1)
        d = np.zeros((dm.shape[0], k))
        d[:, 1:] = dm
        return d.T @ d


def monotone_basis(t, config: MonotoneSplineConfig, times=None):
    """B-spline basis and its time derivative at ``t``.

    Knots are placed at quantiles of ``times`` (defaults to ``t`` itself).
    Returns (values, derivatives, clamped) with one row per time point.
    """
    basis = MonotoneBasis(np.asarray(t if times is None else times), config)
    return basis.basis(t)


def monotone_coefs(raw) -> np.ndarray:
    """Map unconstrained ``raw`` to non-decreasing spline coefficients.

    gamma_0 = raw_0 and gamma_k = raw_0 + sum_{j <= k} exp(raw_j).
    """
    raw = np.asarray(raw, dtype=float)
    out = np.empty_like(raw)
    out[0] = raw[0]
    out[1:] = raw[0] + np.cumsum(np.exp(raw[1:]))
    return out


class PSplineBasis:
    """Centred cubic P-spline for a continuous covariate.

    The sum-to-zero constraint over the training values is absorbed by a QR
    reparameterisation, leaving ``n_basis - 1`` free coefficients.
    """

    def __init__(self, x: np.ndarray, config: PSplineConfig | None = None):
        config = config or PSplineConfig()
        x = np.asarray(x, dtype=float)
        self.config = config
        k = config.degree
        lo, hi = float(np.min(x)), float(np.max(x))
        if hi <= lo:
            raise ConfigError("smooth term needs a covariate with more than one distinct value")
        span = hi - lo
        lo -= 1e-3 * span
        hi += 1e-3 * span
        n_int = config.n_basis - k - 1
        step = (hi - lo) / (n_int + 1)
        self.knots = lo + step * np.arange(-k, n_int + k + 2)
        self.lower, self.upper = lo, hi
        self._spline = BSpline(self.knots, np.eye(config.n_basis), k, extrapolate=False)
        raw = self._raw(x)
        q, _ = np.linalg.qr(raw.mean(axis=0)[:, None], mode="complete")
        self.Z = q[:, 1:]
        d = difference_matrix(config.n_basis, config.penalty_order)
        self.raw_penalty = d.T @ d
        self.center = raw.mean(axis=0) @ self.Z

    def _raw(self, x):
        xc = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        return np.nan_to_num(self._spline(xc))

    @property
    def n_coef(self) -> int:
        return self.config.n_basis - 1

    def design(self, x) -> np.ndarray:
        return self._raw(x) @ self.Z

    def penalty(self) -> np.ndarray:
        return self.Z.T @ self.raw_penalty @ self.Z


def difference_penalty_value(coefs, order: int = 2) -> float:
    """Squared-difference roughness of raw spline coefficients."""
    d = np.diff(np.asarray(coefs, dtype=float), n=order)
    return float(d @ d)


# --------------------------------------------------------------------------
# predictors
# --------------------------------------------------------------------------

@dataclass
class PredictorSpec:
    """Terms of one additive predictor.

    Covariates are referred to by column name. When a baseline is present it
    carries the overall level, so no separate intercept column is created.
    """

    intercept: bool = True
    baseline: MonotoneSplineConfig | None = None
    linear: list[str] = field(default_factory=list)
    smooth: list[tuple[str, PSplineConfig]] = field(default_factory=list)

    @property
    def covariates(self) -> list[str]:
        return list(self.linear) + [name for name, _ in self.smooth]

    def to_dict(self) -> list[dict]:
        terms: list[dict] = []
        if self.baseline is not None:
            terms.append({"type": "baseline", "n_basis": self.baseline.n_basis,
                          "degree": self.baseline.degree})
        elif self.intercept:
            terms.append({"type": "intercept"})
        terms += [{"type": "linear", "covariate": c} for c in self.linear]
        terms += [{"type": "smooth", "covariate": c, "n_basis": cfg.n_basis,
                   "degree": cfg.degree} for c, cfg in self.smooth]
        return terms

    @classmethod
    def from_dict(cls, terms: Sequence[dict]) -> "PredictorSpec":
        spec = cls(intercept=False)
        for term in terms:
            kind = term.get("type")
            if kind == "baseline":
                spec.baseline = MonotoneSplineConfig(
                    n_basis=int(term.get("n_basis", 10)), degree=int(term.get("degree", 3)))
            elif kind == "intercept":
                spec.intercept = True
            elif kind == "linear":
                spec.linear.append(str(term["covariate"]))
            elif kind == "smooth":
                spec.smooth.append((str(term["covariate"]), PSplineConfig(
                    n_basis=int(term.get("n_basis", 8)), degree=int(term.get("degree", 3)))))
            else:
                raise ConfigError(f"unknown predictor term type {kind!r}")
        if spec.baseline is None and not spec.linear and not spec.smooth:
            spec.intercept = True
        return spec


@dataclass
class SmoothBlock:
    label: str
    cols: slice  # within the predictor's coefficient vector
    penalty: np.ndarray
    rank: int


class Predictor:
    """A PredictorSpec bound to data: bases built, coefficient layout fixed.

    Coefficient order: baseline raw coefficients, intercept, linear terms,
    smooth-term blocks.
    """

    def __init__(self, spec: PredictorSpec, X: np.ndarray, names: Sequence[str],
                 times: np.ndarray | None = None, label: str = "eta"):
        self.spec = spec
        self.label = label
        names = list(names)
        lookup = {n: i for i, n in enumerate(names)}
        missing = [c for c in spec.covariates if c not in lookup]
        if missing:
            raise ConfigError(f"{label}: unknown covariates {missing}")
        self.baseline: MonotoneBasis | None = None
        coef_names: list[str] = []
        self.blocks: list[SmoothBlock] = []
        if spec.baseline is not None:
            if times is None:
                raise ConfigError(f"{label}: baseline requested without survival times")
            self.baseline = MonotoneBasis(times, spec.baseline)
            coef_names += [f"{label}:s(t).r{j}" for j in range(self.baseline.n_basis)]
            self.blocks.append(SmoothBlock(
                f"{label}:s(t)", slice(0, self.baseline.n_basis),
                self.baseline.penalty(),
                self.baseline.n_basis - self.baseline.config.penalty_order))
        self.n_base = len(coef_names)
        self.has_intercept = spec.baseline is None and spec.intercept
        if self.has_intercept:
            coef_names.append(f"{label}:(Intercept)")
        self.linear_idx = [lookup[c] for c in spec.linear]
        self.linear_pos = {}
        for c in spec.linear:
            self.linear_pos[c] = len(coef_names)
            coef_names.append(f"{label}:{c}")
        self.smooths: list[tuple[int, PSplineBasis]] = []
        X = np.asarray(X, dtype=float)
        for c, cfg in spec.smooth:
            j = lookup[c]
            basis = PSplineBasis(X[:, j], cfg)
            start = len(coef_names)
            coef_names += [f"{label}:s({c}).{k}" for k in range(basis.n_coef)]
            self.smooths.append((j, basis))
            self.blocks.append(SmoothBlock(
                f"{label}:s({c})", slice(start, start + basis.n_coef), basis.penalty(),
                cfg.n_basis - cfg.penalty_order))
        self.coef_names = coef_names
        self.n_coef = len(coef_names)
        self.n_cov = self.n_coef - self.n_base

    def covariate_design(self, X) -> np.ndarray:
        """Columns multiplying the non-baseline coefficients."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = []
        if self.has_intercept:
            cols.append(np.ones((X.shape[0], 1)))
        if self.linear_idx:
            cols.append(X[:, self.linear_idx])
        for j, basis in self.smooths:
            cols.append(basis.design(X[:, j]))
        if not cols:
            return np.zeros((X.shape[0], 0))
        return np.hstack(cols)

    def split(self, coefs):
        coefs = np.asarray(coefs, dtype=float)
        if coefs.shape != (self.n_coef,):
            raise DomainError(f"{self.label}: expected {self.n_coef} coefficients, got {coefs.shape}")
        return coefs[:self.n_base], coefs[self.n_base:]

    @staticmethod
    def raw_weights(raw):
        raw = np.asarray(raw, dtype=float)
        return np.concatenate([raw[:1], np.exp(raw[1:])])

    def eta(self, t, X, coefs):
        """Vectorised predictor and its time derivative."""
        raw, beta = self.split(coefs)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        eta = self.covariate_design(X) @ beta
        deta = np.zeros_like(eta)
        if self.baseline is not None:
            bc, dbc, _ = self.baseline.evaluate(np.broadcast_to(np.asarray(t, float), eta.shape))
            w = self.raw_weights(raw)
            eta = eta + bc @ w
            deta = dbc @ w
        return eta, deta


def eta_eval(t, x_row, predictor: Predictor, coefs):
    """Predictor value and d eta / d t for one record."""
    eta, deta = predictor.eta(np.atleast_1d(t), np.atleast_2d(x_row), coefs)
    return float(eta[0]), float(deta[0])


def marginal_survival_density(t, x_row, predictor: Predictor, coefs, link):
    """Marginal survival S(t | x) and density f = -G'(eta) * d eta / d t for one record."""
    link = SurvivalLink.parse(link)
    eta, deta = eta_eval(t, x_row, predictor, coefs)
    s, _, lmg, _ = link_eval(eta, link)
    return float(s), float(np.exp(lmg) * deta)
