"""Data-generating process for the simulation study.

Margin 1 is PH in (x1, x2), margin 2 is PO in (x1, x3), both sharing the
baseline S0(t) = 0.9 exp(-0.4 t^2.5) + 0.1 exp(-0.1 t). The pair is joined
by a Clayton copula on the survival scale: T1 is drawn first and T2 from
its conditional distribution. Right-censoring times are uniform on
(0, c_v) with c_v calibrated to hit a target censoring fraction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .copulas import CopulaFamily, conditional_inverse, dependence_link
from .data import SurvivalDataset
from .errors import ConfigError, DataError

T_BRACKET = 8.0
MAX_EXTENSIONS = 30
PILOT_SIZE = 100_000
PILOT_SEED = 20240917


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "A"
    n: int = 800
    p: int = 20
    beta1: tuple[float, float] = (-1.5, 1.7)
    beta2: tuple[float, float] = (-1.5, -1.3)
    beta3: tuple[float, float, float, float] = (1.2, -1.5, 1.7, -1.5)
    censor_targets: tuple[float, float] = (0.11, 0.32)
    scenario_b_intercept: bool = False
    max_extensions: int = MAX_EXTENSIONS

    def __post_init__(self):
        if self.scenario not in ("A", "B"):
            raise ConfigError(f"scenario must be 'A' or 'B', got {self.scenario!r}")
        if self.p < 3:
            raise ConfigError("p must be at least 3")
        if self.n < 1:
            raise ConfigError("n must be positive")
        for c in self.censor_targets:
            if not 0.0 <= c < 1.0:
                raise ConfigError(f"censoring target {c} outside [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)

    @property
    def true_sets(self) -> tuple[frozenset, frozenset]:
        return frozenset({"x1", "x2"}), frozenset({"x1", "x2", "x3"})


def gen_covariates(config: ScenarioConfig, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """First three columns correlated 0.5, the rest independent standard normal."""
    n = config.n if n is None else n
    sigma = np.full((3, 3), 0.5) + 0.5 * np.eye(3)
    L = np.linalg.cholesky(sigma)
    Z = rng.standard_normal((n, config.p))
    Z[:, :3] = Z[:, :3] @ L.T
    return Z


def baseline_s10(t):
    """Shared baseline survival S0(t)."""
    t = np.asarray(t, dtype=float)
    s = 0.9 * np.exp(-0.4 * t ** 2.5) + 0.1 * np.exp(-0.1 * t)
    return float(s) if s.ndim == 0 else s


def log_baseline_s10(t):
    t = np.asarray(t, dtype=float)
    return np.logaddexp(np.log(0.9) - 0.4 * t ** 2.5, np.log(0.1) - 0.1 * t)


def _baseline_log_deriv(t):
    la = np.log(0.9) - 0.4 * t ** 2.5
    lb = np.log(0.1) - 0.1 * t
    lg = np.logaddexp(la, lb)
    wa = np.exp(la - lg)
    return lg, -wa * t ** 1.5 - 0.1 * (1.0 - wa)


def _linear_predictor(x_row, margin: int, config: ScenarioConfig):
    x = np.atleast_2d(np.asarray(x_row, dtype=float))
    if margin == 1:
        return config.beta1[0] * x[:, 0] + config.beta1[1] * x[:, 1]
    return config.beta2[0] * x[:, 0] + config.beta2[1] * x[:, 2]


def log_baseline_target(u, xb, margin: int):
    """log s0 such that S(t | x) = u exactly when S0(t) = s0."""
    u = np.asarray(u, dtype=float)
    if margin == 1:
        # PH: S = S0^exp(xb)
        return np.log(u) * np.exp(-xb)
    # PO: odds(S) = odds(S0) exp(xb)
    return -np.logaddexp(0.0, np.log1p(-u) - np.log(u) - xb)


def conditional_survival(t, x_row, margin: int, config: ScenarioConfig):
    """True S_v(t | x) of the generating model."""
    xb = _linear_predictor(x_row, margin, config)
    ls0 = log_baseline_s10(t)
    if margin == 1:
        s = np.exp(ls0 * np.exp(xb))
    else:
        log_odds0 = np.log(-np.expm1(ls0)) - ls0
        s = expit(-(log_odds0 + xb))
    return float(s[0]) if s.ndim == 1 and s.size == 1 and np.ndim(t) == 0 else s


def invert_time(u: float, x_row, margin: int, config: ScenarioConfig = ScenarioConfig()) -> float:
    """Solve S_v(t | x) = u with Brent's method on (0, 8], extending the bracket if needed."""
    if not 0.0 < u < 1.0:
        raise DataError(f"u must lie in (0, 1), got {u}")
    target = float(log_baseline_target(u, _linear_predictor(x_row, margin, config)[0], margin))
    hi = T_BRACKET
    f = lambda t: float(log_baseline_s10(t)) - target
    for _ in range(config.max_extensions + 1):
        if f(hi) < 0:
            return brentq(f, 0.0, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200)
        hi *= 2.0
    raise DataError(f"time not bracketed for u={u}, x={np.ravel(x_row)[:3]}, margin {margin}")


def invert_times(u, X, margin: int, config: ScenarioConfig) -> np.ndarray:
    """Vectorised invert_time: safeguarded Newton on log S0 inside a per-row bracket."""
    log_target = log_baseline_target(u, _linear_predictor(X, margin, config), margin)
    n = log_target.size
    lo = np.zeros(n)
    hi = np.full(n, T_BRACKET)
    for _ in range(config.max_extensions):
        short = log_baseline_s10(hi) >= log_target
        if not short.any():
            break
        hi = np.where(short, 2.0 * hi, hi)
    bad = log_baseline_s10(hi) >= log_target
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DataError(f"time not bracketed for u={np.ravel(u)[i]}, row {i}, margin {margin}")
    t = 0.5 * (lo + hi)
    for _ in range(200):
        g, dg = _baseline_log_deriv(t)
        r = g - log_target
        lo = np.where(r > 0, t, lo)
        hi = np.where(r <= 0, t, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - r / dg
        outside = ~np.isfinite(tn) | (tn <= lo) | (tn >= hi)
        tn = np.where(outside, 0.5 * (lo + hi), tn)
        done = np.abs(tn - t) < 1e-12 * (1.0 + t)
        t = tn
        if np.all(done):
            break
    return t


def dependence_eta(X, config: ScenarioConfig) -> np.ndarray:
    b = config.beta3
    if config.scenario == "A":
        return np.full(X.shape[0], b[0])
    eta = b[1] * X[:, 0] + b[2] * X[:, 1] + b[3] * X[:, 2]
    return eta + b[0] if config.scenario_b_intercept else eta


def gen_joint_times(X, config: ScenarioConfig, rng: np.random.Generator, return_u: bool = False):
    """Draw (t1, t2) given X: t1 from margin 1, then t2 from the Clayton conditional."""
    n = X.shape[0]
    u1 = rng.uniform(size=n)
    w = rng.uniform(size=n)
    theta = dependence_link(dependence_eta(X, config))
    u2 = conditional_inverse(u1, w, theta, CopulaFamily.CLAYTON)
    u2 = np.clip(u2, 1e-300, 1.0 - 1e-16)
    t1 = invert_times(u1, X, 1, config)
    t2 = invert_times(u2, X, 2, config)
    if return_u:
        return t1, t2, u1, u2
    return t1, t2


def _censor_fraction(c: float, t: np.ndarray) -> float:
    # P(C < T) for C ~ U(0, c), averaged over the pilot times
    return float(np.mean(np.minimum(t, c) / c))


def calibrate_censoring(t: np.ndarray, target: float) -> float:
    """Upper bound c with P(U(0, c) < T) = target over the sample t (bisection)."""
    if target <= 0:
        return np.inf
    lo, hi = 1e-8, float(np.max(t))
    if _censor_fraction(hi, t) > target:
        while _censor_fraction(hi, t) > target:
            hi *= 2.0
            if hi > 1e12:
                raise ConfigError(f"censoring target {target} unreachable")
    if _censor_fraction(lo, t) < target:
        raise ConfigError(f"censoring target {target} unreachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _censor_fraction(mid, t) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


@lru_cache(maxsize=32)
def censoring_bounds(config: ScenarioConfig) -> tuple[float, float]:
    """Calibrated (c1, c2) from a fixed-seed pilot sample of 10^5 draws."""
    pilot = ScenarioConfig(**{**config.to_dict(), "n": PILOT_SIZE, "p": 3})
    rng = np.random.default_rng(PILOT_SEED)
    Xp = gen_covariates(pilot, rng)
    t1, t2 = gen_joint_times(Xp, pilot, rng)
    return (calibrate_censoring(t1, config.censor_targets[0]),
            calibrate_censoring(t2, config.censor_targets[1]))


def apply_censoring(t1, t2, X, config: ScenarioConfig, rng: np.random.Generator,
                    bounds: tuple[float, float] | None = None) -> SurvivalDataset:
    """Right-censor each margin with C ~ U(0, c_v)."""
    c1, c2 = censoring_bounds(config) if bounds is None else bounds
    n = len(t1)
    cc1 = rng.uniform(0.0, 1.0, size=n) * c1 if np.isfinite(c1) else np.full(n, np.inf)
    cc2 = rng.uniform(0.0, 1.0, size=n) * c2 if np.isfinite(c2) else np.full(n, np.inf)
    names = [f"x{j + 1}" for j in range(X.shape[1])]
    return SurvivalDataset.from_times(t1, t2, cc1, cc2, X, names)


def simulate_dataset(config: ScenarioConfig, seed) -> SurvivalDataset:
    """One complete simulated dataset, deterministic in (config, seed)."""
    rng = np.random.default_rng(seed)
    X = gen_covariates(config, rng)
    t1, t2 = gen_joint_times(X, config, rng)
    return apply_censoring(t1, t2, X, config, rng)


def truth(config: ScenarioConfig) -> dict:
    s1, s2 = config.true_sets
    return {"beta1": {"x1": config.beta1[0], "x2": config.beta1[1]},
            "beta2": {"x1": config.beta2[0], "x3": config.beta2[1]},
            "beta3": list(config.beta3), "scenario": config.scenario,
            "s1": sorted(s1), "s2": sorted(s2)}
