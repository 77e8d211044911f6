"""Bivariate ranking-based variable selection over bootstrap subsamples."""

from __future__ import annotations

import json
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .copulas import CopulaFamily
from .data import SurvivalDataset
from .errors import ConfigError, NumericalError
from .fitting import fisher_diag, select_smoothing, trust_region_fit
from .likelihood import Likelihood
from .margins import MonotoneSplineConfig, PredictorSpec, SurvivalLink
from .measures import MeasureKind, ce_measure
from .model import ModelDesign, ModelSpec

# the ratio rule searches k = 0..k_max-1, so k_max - 1 is the largest selectable size
KMAX_WARNING = ("the selected set of margin {m} has the largest size the ratio rule can "
                "return (k_max - 1); rerun with a larger k_max")


@dataclass(frozen=True)
class BRBVSParams:
    B: int = 20
    m: int | None = None          # subsample size, defaults to n // 2
    k_max: int = 6
    tau: float = 0.5
    seed: int = 0
    copula: str = "C0"
    links: tuple[str, str] = ("PH", "PO")
    metric: str = "FIM"
    n_basis: int = 10
    min_fit_size: int = 50
    max_iter: int = 200

    def __post_init__(self):
        object.__setattr__(self, "copula", CopulaFamily.parse(self.copula).value)
        object.__setattr__(self, "links", tuple(SurvivalLink.parse(x).value for x in self.links))
        object.__setattr__(self, "metric", MeasureKind.parse(self.metric).value)
        if self.B < 1:
            raise ConfigError("B must be at least 1")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.k_max < 1:
            raise ConfigError("k_max must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def subsample_size(self, n: int) -> int:
        return n // 2 if self.m is None else self.m

    def validate(self, n: int, p: int) -> None:
        m = self.subsample_size(n)
        if not 1 <= m <= n:
            raise ConfigError(f"subsample size m={m} must lie in [1, n={n}]")
        if self.k_max > p:
            raise ConfigError(f"k_max={self.k_max} exceeds the number of covariates p={p}")
        if p < 1:
            raise ConfigError("at least one covariate is required")
        if MeasureKind(self.metric).needs_fit and m < self.min_fit_size:
            raise ConfigError(f"subsample size m={m} below the minimum fit size {self.min_fit_size}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["links"] = list(self.links)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BRBVSParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown brbvs keys {sorted(unknown)}")
        kw = dict(d)
        if "links" in kw:
            kw["links"] = tuple(kw["links"])
        return cls(**kw)


@dataclass
class RankRecord:
    """Rankings of one subsample for both margins.

    ``order`` holds covariate indices sorted by decreasing measure (ties by
    ascending index); ``values`` the measure per covariate in original order.
    """
    b: int
    q: int
    order: tuple[list[int], list[int]]
    values: tuple[list[float], list[float]]
    n_failed: int = 0


def rank_order(values) -> list[int]:
    v = np.asarray(values, dtype=float)
    return [int(i) for i in np.lexsort((np.arange(v.size), -v))]


def subsample_plan(n: int, m: int, B: int, seed: int) -> list[list[np.ndarray]]:
    """For each replicate b, r = n // m disjoint sorted index sets of size m."""
    if m > n or m < 1:
        raise ConfigError(f"subsample size m={m} must lie in [1, n={n}]")
    r = n // m
    plan = []
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        perm = rng.permutation(n)
        plan.append([np.sort(perm[q * m:(q + 1) * m]) for q in range(r)])
    return plan


def null_spec(copula, links, n_basis: int = 10) -> ModelSpec:
    return ModelSpec.simple(copula, links, n_basis=n_basis)


def single_spec(copula, links, covariate: str, n_basis: int = 10) -> ModelSpec:
    return ModelSpec.simple(copula, links, [covariate], [covariate], n_basis=n_basis)


def _single_init(null_coef: np.ndarray, null_design: ModelDesign) -> np.ndarray:
    """Null-model coefficients with a zero slot after each margin's baseline."""
    out = []
    for m in range(3):
        block = null_coef[null_design.sl[m]]
        out.append(block)
        if m < 2:
            out.append(np.zeros(1))
    return np.concatenate(out)


def single_covariate_measures(sub: SurvivalDataset, params: BRBVSParams, lambdas,
                              metrics=None):
    """Measures of every covariate in both margins from single-covariate fits.

    Returns ({metric: (values1, values2)}, n_failed, n_fits). Non-converged fits
    score 0 in every metric.
    """
    metrics = [MeasureKind.parse(m) for m in (metrics or [params.metric])]
    p = sub.p
    out = {k: (np.zeros(p), np.zeros(p)) for k in metrics}
    fit_metrics = [k for k in metrics if k.needs_fit]
    for k in metrics:
        if k is MeasureKind.CE:
            for m in range(2):
                t = sub.observed_times(m)
                out[k][m][:] = [ce_measure(t, sub.X[:, j]) for j in range(p)]
    if not fit_metrics:
        return out, 0, 0
    d0 = ModelDesign(null_spec(params.copula, params.links, params.n_basis), sub)
    f0 = trust_region_fit(Likelihood(d0), lambdas, max_iter=params.max_iter)
    failed = 0
    for j, name in enumerate(sub.covariate_names):
        design = ModelDesign(single_spec(params.copula, params.links, name, params.n_basis), sub)
        try:
            fit = trust_region_fit(Likelihood(design), lambdas, _single_init(f0.coef, d0),
                                   max_iter=params.max_iter)
        except NumericalError:
            fit = None
        if fit is None or not fit.converged:
            failed += 1
            continue
        info = fisher_diag(fit)
        for m in range(2):
            i = fit.coef_index(m + 1, name)
            beta = fit.coef[i]
            for k in fit_metrics:
                out[k][m][j] = beta * beta * info[i] if k is MeasureKind.FIM else abs(beta)
    if failed > p / 2:
        raise NumericalError(f"{failed} of {p} single-covariate fits did not converge")
    return out, failed, p


def rank_one_subsample(data: SurvivalDataset, idx, params: BRBVSParams, lambdas=None,
                       b: int = 0, q: int = 0, metrics=None) -> dict:
    """RankRecords (one per metric) for the subsample ``data[idx]``."""
    sub = data.subset(idx)
    vals, failed, _ = single_covariate_measures(sub, params, lambdas, metrics)
    return {k.value: RankRecord(b, q, (rank_order(v[0]), rank_order(v[1])),
                                ([float(x) for x in v[0]], [float(x) for x in v[1]]), failed)
            for k, v in vals.items()}


def estimate_pi(records, margin: int, k: int):
    """Most frequent order-free top-k set of one margin and its frequency.

    ``margin`` is 1 or 2. Returns (sorted index tuple, pi, {set: frequency}).
    Ties between sets go to the lexicographically smallest sorted tuple.
    """
    if k == 0:
        return (), 1.0, {(): 1.0}
    counts = Counter(tuple(sorted(rec.order[margin - 1][:k])) for rec in records)
    total = len(records)
    best = min(counts, key=lambda s: (-counts[s], s))
    return best, counts[best] / total, {s: c / total for s, c in sorted(counts.items())}


def select_s(pi_sequence, tau: float, floor: float | None = None):
    """argmin_k pi(A_{k+1})^tau / pi(A_k) over k = 0..k_max-1.

    Zero probabilities are replaced by ``floor`` before the ratio. Returns
    (k, ratios, floored) with ties resolved toward the smallest k.
    """
    pi = np.asarray(pi_sequence, dtype=float)
    if pi.size < 2:
        raise ConfigError("need probabilities for k = 0..k_max with k_max >= 1")
    if pi[0] != 1.0:
        raise ConfigError("pi for the empty set must be exactly 1")
    floored = bool(np.any(pi <= 0))
    if floored:
        if floor is None or floor <= 0:
            raise ConfigError("zero probabilities require a positive floor")
        pi = np.where(pi <= 0, floor, pi)
    ratios = pi[1:] ** tau / pi[:-1]
    return int(np.argmin(ratios)), ratios, floored


@dataclass
class MarginResult:
    sets: list[list[str]]          # A_k for k = 1..k_max
    pi: list[float]                # pi(A_k) for k = 0..k_max
    ratios: list[float]
    s_hat: list[str]
    nested: bool
    floored: bool
    rank_freq: dict[str, list[float]]   # covariate -> % of subsamples at each rank 1..k_max
    selection_freq: dict[str, float]    # covariate -> % of subsamples in the top |s_hat|


@dataclass
class BRBVSResult:
    params: dict
    n: int
    p: int
    r: int
    covariates: list[str]
    margins: list[MarginResult]
    lambdas: list[float] | None
    n_fits: int
    n_failed: int
    warnings: list[str] = field(default_factory=list)

    @property
    def s_hat(self) -> tuple[list[str], list[str]]:
        return self.margins[0].s_hat, self.margins[1].s_hat

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = ["Sets of Relevant Covariates", "=" * 32, "",
                 f"Metric: {self.params['metric']}", f"kmax: {self.params['k_max']}",
                 f"Copula: {self.params['copula']}", f"Margins: {' '.join(self.params['links'])}",
                 "", "=" * 32]
        for m, res in enumerate(self.margins, start=1):
            lines += ["", f"Survival Function {m}:"]
            if not res.s_hat:
                lines.append("  (no covariate selected)")
            prev: set[str] = set()
            for k in range(1, len(res.s_hat) + 1):
                cur = res.sets[k - 1]
                new = [c for c in cur if c not in prev] or cur
                lines.append(f"  - rank {k}: {', '.join(new)} ({100 * res.pi[k]:.2f}%)")
                prev = set(cur)
            if not res.nested:
                lines.append("  note: top-ranked sets are not nested across k")
        if self.n_failed:
            lines += ["", f"non-converged fits: {self.n_failed} of {self.n_fits}"]
        for w in self.warnings:
            lines += ["", f"WARNING: {w}"]
        return "\n".join(lines) + "\n"

    def bar_chart_rows(self) -> list[tuple[str, int, float]]:
        return [(c, m + 1, res.selection_freq[c])
                for m, res in enumerate(self.margins) for c in self.covariates]


def _run_task(args):
    data, idx, params, lambdas, b, q, metrics = args
    return rank_one_subsample(data, idx, params, lambdas, b, q, metrics)


def run_tasks(tasks, workers: int = 1):
    """Map _run_task over ``tasks`` keeping input order (so output is worker-independent)."""
    if workers <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def baseline_lambdas(data: SurvivalDataset, params: BRBVSParams):
    """Smoothing parameters of the two baselines, chosen by AIC on the full-data null model."""
    lik = Likelihood(ModelDesign(null_spec(params.copula, params.links, params.n_basis), data))
    return select_smoothing(lik, "AIC", max_iter=params.max_iter).lambdas


def summarise_records(records: list[RankRecord], names: list[str], params: BRBVSParams):
    """Per-margin top-ranked sets, probabilities and the selected sets."""
    k_max = params.k_max
    floor = 1.0 / (2.0 * len(records))
    out = []
    for margin in (1, 2):
        sets, pis = [], [1.0]
        for k in range(1, k_max + 1):
            s, pi, _ = estimate_pi(records, margin, k)
            sets.append(list(s))
            pis.append(pi)
        k_hat, ratios, floored = select_s(pis, params.tau, floor)
        nested = all(set(sets[k - 1]) <= set(sets[k]) for k in range(1, k_max))
        s_hat = [names[i] for i in sets[k_hat - 1]] if k_hat > 0 else []
        rank_freq = {c: [0.0] * k_max for c in names}
        for rec in records:
            for pos, j in enumerate(rec.order[margin - 1][:k_max]):
                rank_freq[names[j]][pos] += 100.0 / len(records)
        top = max(k_hat, 1)
        sel = {c: 0.0 for c in names}
        for rec in records:
            for j in rec.order[margin - 1][:top]:
                sel[names[j]] += 100.0 / len(records)
        out.append(MarginResult([[names[i] for i in s] for s in sets], pis,
                                [float(x) for x in ratios], s_hat, nested, floored,
                                rank_freq, sel))
    return out


def brbvs_run(data: SurvivalDataset, params: BRBVSParams, workers: int = 1,
              lambdas=None, metrics=None) -> BRBVSResult | dict[str, BRBVSResult]:
    """Full selection procedure.

    With ``metrics`` (a list) the same subsample fits feed every listed
    measure and a dict of results keyed by metric name is returned.
    """
    params.validate(data.n, data.p)
    multi = metrics is not None
    metric_list = [MeasureKind.parse(m) for m in (metrics or [params.metric])]
    m = params.subsample_size(data.n)
    plan = subsample_plan(data.n, m, params.B, params.seed)
    r = len(plan[0])
    if lambdas is None and any(k.needs_fit for k in metric_list):
        lambdas = baseline_lambdas(data, params)
    tasks = [(data, idx, params, lambdas, b, q, metric_list)
             for b, sets in enumerate(plan) for q, idx in enumerate(sets)]
    ranked = run_tasks(tasks, workers)
    results = {}
    for kind in metric_list:
        records = [rk[kind.value] for rk in ranked]
        p_kind = BRBVSParams(**{**params.to_dict(), "links": params.links, "metric": kind.value})
        margins = summarise_records(records, data.covariate_names, p_kind)
        warn = []
        for i, res in enumerate(margins, start=1):
            if len(res.s_hat) == params.k_max - 1:
                msg = KMAX_WARNING.format(m=i)
                warn.append(msg)
                warnings.warn(msg, stacklevel=2)
        n_fits = len(records) * data.p if kind.needs_fit else 0
        n_failed = sum(rec.n_failed for rec in records) if kind.needs_fit else 0
        results[kind.value] = BRBVSResult(
            p_kind.to_dict(), data.n, data.p, r, list(data.covariate_names), margins,
            None if lambdas is None else [float(x) for x in lambdas], n_fits, n_failed, warn)
    return results if multi else results[metric_list[0].value]
