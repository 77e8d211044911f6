"""Bivariate mixed-censored survival data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError

STATUS_CODES = ("U", "R", "L", "I")


@dataclass
class SurvivalDataset:
    """n records of paired event-time bounds plus a covariate matrix.

    ``lower`` and ``upper`` have shape (n, 2), one column per margin.
    Status codes per margin:

    * ``U`` uncensored, lower == upper == event time
    * ``R`` right-censored, event after ``lower``; ``upper`` is +inf
    * ``L`` left-censored, event before ``upper``; ``lower`` is 0
    * ``I`` interval-censored, 0 < lower < upper < inf
    """

    lower: np.ndarray
    upper: np.ndarray
    status: np.ndarray
    X: np.ndarray
    covariate_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).reshape(-1, 2)
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1, 2)
        self.status = np.asarray(self.status, dtype="<U1").reshape(-1, 2)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else np.zeros((len(self.lower), 0))
        self.X = X
        if not self.covariate_names:
            self.covariate_names = [f"x{j + 1}" for j in range(self.X.shape[1])]
        self.covariate_names = list(self.covariate_names)
        self.validate()

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n

    def validate(self) -> None:
        n = self.lower.shape[0]
        if self.upper.shape != (n, 2) or self.status.shape != (n, 2) or self.X.shape[0] != n:
            raise DataError("lower, upper, status and X must have the same number of rows")
        if len(self.covariate_names) != self.X.shape[1]:
            raise DataError("covariate_names does not match the number of covariate columns")
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise DataError("duplicate covariate names")
        bad = ~np.isin(self.status, STATUS_CODES)
        if np.any(bad):
            i, m = np.argwhere(bad)[0]
            raise DataError(f"row {i}: unknown status code {self.status[i, m]!r} for margin {m + 1}")
        lo, up, st = self.lower, self.upper, self.status
        checks = {
            "U": (lo == up) & np.isfinite(lo) & (lo > 0),
            "R": np.isfinite(lo) & (lo > 0) & np.isposinf(up),
            "L": (lo == 0) & np.isfinite(up) & (up > 0),
            "I": (lo > 0) & (lo < up) & np.isfinite(up),
        }
        for code, ok in checks.items():
            viol = (st == code) & ~ok
            if np.any(viol):
                i, m = np.argwhere(viol)[0]
                raise DataError(
                    f"row {i}: status {code} inconsistent with bounds "
                    f"({lo[i, m]!r}, {up[i, m]!r}) for margin {m + 1}"
                )
        if not np.all(np.isfinite(self.X)):
            i = int(np.argwhere(~np.isfinite(self.X))[0, 0])
            raise DataError(f"row {i}: non-finite covariate value")

    def subset(self, idx) -> "SurvivalDataset":
        idx = np.asarray(idx)
        return SurvivalDataset(self.lower[idx], self.upper[idx], self.status[idx],
                               self.X[idx], list(self.covariate_names))

    def with_covariates(self, names: Sequence[str]) -> "SurvivalDataset":
        cols = [self.covariate_names.index(c) for c in names]
        return SurvivalDataset(self.lower, self.upper, self.status, self.X[:, cols], list(names))

    def column(self, name: str) -> np.ndarray:
        try:
            return self.X[:, self.covariate_names.index(name)]
        except ValueError:
            raise DataError(f"unknown covariate {name!r}") from None

    def observed_times(self, margin: int) -> np.ndarray:
        """Per-record representative time for margin 0/1, ignoring censoring type.

        Uncensored and right-censored records use ``lower``; left-censored use
        ``upper``; interval-censored use the midpoint.
        """
        lo, up, st = self.lower[:, margin], self.upper[:, margin], self.status[:, margin]
        return np.where(st == "L", up, np.where(st == "I", 0.5 * (lo + up), lo))

    def finite_times(self, margin: int) -> np.ndarray:
        """All finite positive bounds of one margin (knot placement pool)."""
        b = np.concatenate([self.lower[:, margin], self.upper[:, margin]])
        return b[np.isfinite(b) & (b > 0)]

    def censoring_rates(self) -> tuple[float, float]:
        return tuple(float(np.mean(self.status[:, m] != "U")) for m in range(2))

    def equals(self, other: "SurvivalDataset") -> bool:
        return (np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)
                and np.array_equal(self.status, other.status) and np.array_equal(self.X, other.X)
                and self.covariate_names == other.covariate_names)

    @classmethod
    def from_times(cls, t1, t2, c1=None, c2=None, X=None, names=None) -> "SurvivalDataset":
        """Right-censored data from event times and optional censoring times."""
        t = np.column_stack([t1, t2]).astype(float)
        c = np.full_like(t, np.inf)
        if c1 is not None:
            c[:, 0] = c1
        if c2 is not None:
            c[:, 1] = c2
        cens = c < t
        lower = np.where(cens, c, t)
        upper = np.where(cens, np.inf, t)
        status = np.where(cens, "R", "U")
        if X is None:
            X = np.zeros((t.shape[0], 0))
        return cls(lower, upper, status, X, list(names) if names is not None else [])
