"""Monte Carlo benchmark of the selection procedure on simulated scenarios."""

from __future__ import annotations

import csv
import io
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BRBVSError
from .measures import MeasureKind
from .selection import BRBVSParams, brbvs_run
from .simulate import ScenarioConfig, simulate_dataset

MARGIN_FIELDS = ("FP_raw", "FN_raw", "FP_norm", "FN_norm", "mean_size", "mean_hits")


def _set_label(s) -> str:
    return "{" + ",".join(sorted(s, key=_natural_key)) + "}"


def _natural_key(name: str):
    digits = "".join(ch for ch in name if ch.isdigit())
    return (name.rstrip("0123456789"), int(digits) if digits else -1, name)


@dataclass
class BenchMetrics:
    n_rep: int
    margins: list[dict[str, float]]
    set_freq: list[dict[str, float]]       # per margin: set label -> % of replicates

    def row(self, margin: int) -> dict[str, float]:
        return self.margins[margin - 1]


def top_set_frequency(log, metric: str, margin: int, k: int, target) -> float:
    """Share of successful replicates whose most frequent top-k set is ``target``."""
    ok = [e for e in log if e["ok"]]
    hits = sum(set(e["top_sets"][metric][margin - 1][k - 1]) == set(target) for e in ok)
    return hits / len(ok) if ok else float("nan")


def score_selection(s_hats, true_sets, k_max: int) -> BenchMetrics:
    """Average FP/FN, selected-set size and hits over replicates.

    ``s_hats`` is a sequence of (s1, s2) pairs. Normalised rates divide FP by
    k_max and FN by k_max - 2.
    """
    s_hats = list(s_hats)
    if not s_hats:
        raise ValueError("at least one replicate is required")
    n = len(s_hats)
    margins, freqs = [], []
    for m in range(2):
        truth = set(true_sets[m])
        sizes = np.array([len(set(s[m])) for s in s_hats], dtype=float)
        hits = np.array([len(set(s[m]) & truth) for s in s_hats], dtype=float)
        fp = float(np.mean(sizes - hits))
        fn = float(np.mean(len(truth) - hits))
        margins.append({
            "FP_raw": fp, "FN_raw": fn,
            "FP_norm": fp / k_max,
            "FN_norm": fn / (k_max - 2) if k_max > 2 else float("nan"),
            "mean_size": float(sizes.mean()), "mean_hits": float(hits.mean()),
        })
        counts = Counter(_set_label(s[m]) for s in s_hats)
        freqs.append({k: 100.0 * v / n for k, v in sorted(counts.items())})
    return BenchMetrics(n, margins, freqs)


def replicate_seeds(seed: int, h: int) -> tuple[np.random.SeedSequence, int]:
    """Data seed and selection seed of replicate h."""
    data_ss = np.random.SeedSequence(seed, spawn_key=(h, 0))
    sel_seed = int(np.random.SeedSequence(seed, spawn_key=(h, 1)).generate_state(1, np.uint64)[0])
    return data_ss, sel_seed


def run_replicate(config: ScenarioConfig, params: BRBVSParams, h: int, seed: int, metrics):
    data_ss, sel_seed = replicate_seeds(seed, h)
    entry = {"replicate": h, "ok": True}
    try:
        data = simulate_dataset(config, data_ss)
        p_h = BRBVSParams(**{**params.to_dict(), "links": params.links, "seed": sel_seed})
        res = brbvs_run(data, p_h, workers=1, metrics=list(metrics))
        entry["censoring"] = list(data.censoring_rates())
        entry["s_hat"] = {k: [list(r.s_hat[0]), list(r.s_hat[1])] for k, r in res.items()}
        entry["top_sets"] = {k: [r.margins[0].sets, r.margins[1].sets] for k, r in res.items()}
        entry["n_failed_fits"] = {k: r.n_failed for k, r in res.items()}
    except BRBVSError as exc:
        entry.update(ok=False, error=f"{type(exc).__name__}: {exc}")
    return entry


def _replicate_task(args):
    return run_replicate(*args)


@dataclass
class BenchResult:
    config: ScenarioConfig
    params: BRBVSParams
    metrics: dict[str, BenchMetrics]
    log: list[dict] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(not e["ok"] for e in self.log)


def run_benchmark(config: ScenarioConfig, params: BRBVSParams, n_rep: int, seed: int = 0,
                  metrics=None, workers: int = 1) -> BenchResult:
    """Simulate ``n_rep`` datasets, run the selection on each and score it.

    Replicates are independent and seeded by (seed, h); output is the same
    for any number of workers. Failed replicates are logged and skipped.
    """
    metrics = [MeasureKind.parse(m).value for m in (metrics or [params.metric])]
    tasks = [(config, params, h, seed, metrics) for h in range(n_rep)]
    if workers > 1 and n_rep > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            log = list(ex.map(_replicate_task, tasks))
    else:
        log = [_replicate_task(t) for t in tasks]
    ok = [e for e in log if e["ok"]]
    scored = {}
    if ok:
        for k in metrics:
            scored[k] = score_selection([e["s_hat"][k] for e in ok], config.true_sets, params.k_max)
    return BenchResult(config, params, scored, log)


TABLE_HEADER = ["scenario", "n", "p", "metric", "n_rep", "n_ok"] + [
    f"{f}{m}" for m in (1, 2) for f in
    ("FP_raw_", "FN_raw_", "FP_norm_", "FN_norm_", "size_", "hits_")]


def table_rows(results: list[BenchResult]) -> list[list]:
    rows = []
    for res in results:
        n_ok = sum(e["ok"] for e in res.log)
        for k, bm in res.metrics.items():
            row = [res.config.scenario, res.config.n, res.config.p, k, len(res.log), n_ok]
            for m in range(2):
                d = bm.margins[m]
                row += [d["FP_raw"], d["FN_raw"], d["FP_norm"], d["FN_norm"],
                        d["mean_size"], d["mean_hits"]]
            rows.append(row)
    return rows


def table_csv(results: list[BenchResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    for row in table_rows(results):
        w.writerow([f"{x:.6f}" if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def set_freq_csv(results: list[BenchResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "n", "p", "metric", "margin", "set", "percent"])
    for res in results:
        for k, bm in res.metrics.items():
            for m in range(2):
                for label, pct in bm.set_freq[m].items():
                    w.writerow([res.config.scenario, res.config.n, res.config.p, k, m + 1,
                                label, f"{pct:.2f}"])
    return buf.getvalue()
