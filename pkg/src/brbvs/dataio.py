"""CSV dataset files.

Required columns: t1_lower, t1_upper, t2_lower, t2_upper, cens1, cens2. An
empty upper bound means +inf. Every other column is a covariate; columns
declared categorical are expanded into reference-coded indicators. A column
named ``cens`` (combined status) is ignored.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import SurvivalDataset
from .errors import DataError

TIME_COLUMNS = ("t1_lower", "t1_upper", "t2_lower", "t2_upper")
STATUS_COLUMNS = ("cens1", "cens2")
IGNORED_COLUMNS = ("cens",)


def _parse_bound(text: str, line: int, col: str, upper: bool) -> float:
    s = text.strip()
    if s == "" or s.lower() in ("inf", "+inf"):
        if upper:
            return np.inf
        raise DataError(f"line {line}: missing value in {col}")
    try:
        return float(s)
    except ValueError:
        raise DataError(f"line {line}: {col}={text!r} is not a number") from None


def _level_key(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def read_dataset(path, categorical: Sequence[str] = ()) -> SurvivalDataset:
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in TIME_COLUMNS + STATUS_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: missing required columns {missing}")
        categorical = list(categorical)
        unknown = [c for c in categorical if c not in header]
        if unknown:
            raise DataError(f"{path}: categorical columns {unknown} not in file")
        cov_cols = [c for c in header
                    if c not in TIME_COLUMNS + STATUS_COLUMNS + IGNORED_COLUMNS]
        rows = list(reader)
    n = len(rows)
    if n == 0:
        raise DataError(f"{path}: no data rows")
    lower = np.empty((n, 2))
    upper = np.empty((n, 2))
    status = np.empty((n, 2), dtype="<U1")
    raw: dict[str, list[str]] = {c: [] for c in cov_cols}
    for i, row in enumerate(rows):
        line = i + 2
        for m in range(2):
            lower[i, m] = _parse_bound(row[f"t{m + 1}_lower"], line, f"t{m + 1}_lower", False)
            upper[i, m] = _parse_bound(row[f"t{m + 1}_upper"], line, f"t{m + 1}_upper", True)
            code = (row[f"cens{m + 1}"] or "").strip().upper()
            status[i, m] = code
            if code not in ("U", "R", "L", "I"):
                raise DataError(f"line {line}: cens{m + 1}={code!r} must be one of U, R, L, I")
        for c in cov_cols:
            raw[c].append((row[c] or "").strip())
    names: list[str] = []
    cols: list[np.ndarray] = []
    for c in cov_cols:
        vals = raw[c]
        if c in categorical:
            levels = sorted(set(vals), key=_level_key)
            for lev in levels[1:]:
                names.append(f"{c}{lev}")
                cols.append(np.array([v == lev for v in vals], dtype=float))
            continue
        try:
            cols.append(np.array([float(v) for v in vals]))
        except ValueError:
            bad = next(i for i, v in enumerate(vals) if not _is_float(v))
            raise DataError(f"line {bad + 2}: covariate {c}={vals[bad]!r} is not numeric "
                            f"(declare it categorical to expand it)") from None
        names.append(c)
    X = np.column_stack(cols) if cols else np.zeros((n, 0))
    try:
        return SurvivalDataset(lower, upper, status, X, names)
    except DataError as exc:
        raise DataError(f"{path}: {exc} (rows counted from 0 after the header)") from None


def _is_float(v: str) -> bool:
    try:
        float(v)
        return True
    except ValueError:
        return False


def _fmt(x: float) -> str:
    if np.isposinf(x):
        return ""
    return repr(float(x))


def write_dataset(path, data: SurvivalDataset) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(TIME_COLUMNS + STATUS_COLUMNS) + list(data.covariate_names))
        for i in range(data.n):
            w.writerow([_fmt(data.lower[i, 0]), _fmt(data.upper[i, 0]),
                        _fmt(data.lower[i, 1]), _fmt(data.upper[i, 1]),
                        data.status[i, 0], data.status[i, 1]]
                       + [repr(float(v)) for v in data.X[i]])
