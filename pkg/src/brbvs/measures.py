"""Covariate-importance measures: Fisher information, absolute coefficient, copula entropy."""

from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma
from scipy.stats import rankdata

from .errors import DataError, DomainError
from .fitting import FittedModel, fisher_diag

CE_MIN_N = 50
CE_K = 3


class MeasureKind(str, Enum):
    FIM = "FIM"
    ABS = "Abs"
    CE = "CE"

    @classmethod
    def parse(cls, value) -> "MeasureKind":
        if isinstance(value, cls):
            return value
        for member in cls:
            if str(value).strip().lower() == member.value.lower():
                return member
        raise DomainError(f"unknown metric {value!r}; expected FIM, Abs or CE")

    @property
    def needs_fit(self) -> bool:
        return self is not MeasureKind.CE


def fim_measure(fit: FittedModel, margin: int, covariate: str) -> float:
    """beta^2 times the observed-information diagonal entry of the coefficient."""
    i = fit.coef_index(margin, covariate)
    return float(fit.coef[i] ** 2 * fisher_diag(fit)[i])


def abs_measure(fit: FittedModel, margin: int, covariate: str) -> float:
    return abs(fit.coefficient(margin, covariate))


def _tie_fraction(x: np.ndarray) -> float:
    return 1.0 - np.unique(x).size / x.size


def pseudo_observations(x) -> np.ndarray:
    """Average ranks scaled into (0, 1)."""
    x = np.asarray(x, dtype=float)
    return rankdata(x, method="average") / (x.size + 1.0)


def _disc_segment(a, b, r):
    """Integral of sqrt(r^2 - X^2) over [a, b] (elementwise, zero when a >= b)."""
    def anti(x):
        x = np.clip(x, -r, r)
        return 0.5 * (x * np.sqrt(np.maximum(r * r - x * x, 0.0)) + r * r * np.arcsin(x / r))
    return np.where(b > a, anti(b) - anti(a), 0.0)


def _disc_below(x, y, r):
    """Area of the origin-centred disc of radius r within {X <= x, Y <= y}."""
    xr = np.clip(x, -r, r)
    yc = np.clip(y, -r, r)
    c = np.sqrt(np.maximum(r * r - yc * yc, 0.0))
    lo_c = np.minimum(-c, xr)
    hi_c = np.minimum(c, xr)
    mid = np.maximum(hi_c - np.maximum(-c, -r), 0.0) * yc + _disc_segment(-c, hi_c, r)
    outer = 2.0 * (_disc_segment(-r, lo_c, r) + _disc_segment(c, xr, r))
    return np.where(yc >= 0, mid + outer, mid)


def disc_square_area(cx, cy, r):
    """Area of the disc centred at (cx, cy) with radius r inside the unit square."""
    g = lambda x, y: _disc_below(x, y, r)
    x0, x1, y0, y1 = -cx, 1.0 - cx, -cy, 1.0 - cy
    return g(x1, y1) - g(x0, y1) - g(x1, y0) + g(x0, y0)


def copula_entropy(u, v, k: int = CE_K) -> float:
    """Kozachenko-Leonenko entropy of a sample on the unit square.

    The k-th neighbour distance is Euclidean; the ball volume is the part of
    the disc lying inside the square, which removes the edge bias of the
    plain estimator for copula samples.
    """
    pts = np.column_stack([u, v])
    n = pts.shape[0]
    dist, _ = cKDTree(pts).query(pts, k=k + 1)
    eps = np.maximum(dist[:, k], 1e-12)
    vol = disc_square_area(pts[:, 0], pts[:, 1], eps)
    return float(digamma(n) - digamma(k) + np.mean(np.log(vol)))


def ce_measure(times, x, k: int = CE_K) -> float:
    """Mutual information between ``times`` and ``x`` as negative copula entropy.

    Both columns are rank-transformed, so the value is invariant to strictly
    increasing transformations of either one. Censoring is ignored.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(x, dtype=float)
    if t.shape != x.shape or t.ndim != 1:
        raise DataError("times and x must be 1-D arrays of equal length")
    if t.size < CE_MIN_N:
        raise DataError(f"copula entropy needs at least {CE_MIN_N} observations, got {t.size}")
    for name, col in (("times", t), ("x", x)):
        if _tie_fraction(col) > 0.5:
            raise DataError(f"more than half of the {name} column is tied; copula entropy is degenerate")
    return -copula_entropy(pseudo_observations(t), pseudo_observations(x), k)
