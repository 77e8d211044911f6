"""Command-line interface: simulate, fit, select, choose, bench.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .bench import run_benchmark, set_freq_csv, table_csv
from .copulas import CopulaFamily
from .data import SurvivalDataset
from .dataio import read_dataset, write_dataset
from .errors import ConfigError, DataError, DomainError, NumericalError
from .fitting import select_smoothing, trust_region_fit
from .likelihood import Likelihood
from .margins import MonotoneSplineConfig, PredictorSpec, SurvivalLink
from .model import ModelDesign, ModelSpec
from .report import fit_report, joint_survival_grid, survival_curve
from .selection import BRBVSParams, brbvs_run
from .simulate import ScenarioConfig, simulate_dataset, truth

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

CONFIG_KEYS = {"seed", "workers", "out", "data", "categorical", "model", "smoothing",
               "brbvs", "scenario", "bench", "plots"}
SMOOTHING_KEYS = {"criterion", "lambdas"}
BENCH_KEYS = {"grid", "n_rep", "metrics"}
PLOT_KEYS = {"profile", "contour", "t1", "t2", "grid_size", "svg"}


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def _check_keys(block: dict, allowed: set, where: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    _check_keys(cfg, CONFIG_KEYS, "config")
    if "smoothing" in cfg:
        _check_keys(cfg["smoothing"], SMOOTHING_KEYS, "smoothing")
    if "bench" in cfg:
        _check_keys(cfg["bench"], BENCH_KEYS, "bench")
    if "plots" in cfg:
        _check_keys(cfg["plots"], PLOT_KEYS, "plots")
    if "model" in cfg:
        ModelSpec.from_dict(cfg["model"])
    if "brbvs" in cfg:
        BRBVSParams.from_dict(cfg["brbvs"])
    if "scenario" in cfg:
        ScenarioConfig.from_dict(cfg["scenario"])
    for key in ("seed", "workers"):
        if key in cfg and (not isinstance(cfg[key], int) or cfg[key] < 0):
            raise ConfigError(f"{key} must be a non-negative integer")


def _seed(args, cfg) -> int:
    return int(args.seed if args.seed is not None else cfg.get("seed", 0))


def _workers(args, cfg) -> int:
    return max(1, int(args.workers if args.workers is not None else cfg.get("workers", 1)))


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.get("out", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _margins_arg(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"--margins expects two links like PH,PO, got {text!r}")
    return tuple(SurvivalLink.parse(p).value for p in parts)


def _load_data(args, cfg) -> SurvivalDataset:
    path = args.data or cfg.get("data")
    if not path:
        raise ConfigError("no dataset given (use --data or the 'data' config key)")
    return read_dataset(path, cfg.get("categorical", []))


def _model_spec(args, cfg, data: SurvivalDataset) -> ModelSpec:
    if "model" in cfg:
        spec = ModelSpec.from_dict(cfg["model"])
    else:
        names = list(data.covariate_names)
        spec = ModelSpec("C0", ("PH", "PO"),
                         PredictorSpec(baseline=MonotoneSplineConfig(), linear=names),
                         PredictorSpec(baseline=MonotoneSplineConfig(), linear=names),
                         PredictorSpec())
    copula = args.copula or spec.copula
    links = _margins_arg(args.margins) if args.margins else spec.links
    return ModelSpec(copula, links, spec.eta1, spec.eta2, spec.eta3)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(args, cfg) -> int:
    sc = dict(cfg.get("scenario", {}))
    if args.scenario:
        sc["scenario"] = args.scenario
    config = ScenarioConfig.from_dict(sc)
    seed = _seed(args, cfg)
    data = simulate_dataset(config, seed)
    out = _out_dir(args, cfg)
    write_dataset(out / "data.csv", data)
    side = truth(config)
    side.update(seed=seed, config=config.to_dict(),
                censoring=dict(zip(("margin1", "margin2"), data.censoring_rates())))
    _write_json(out / "truth.json", side)
    print(f"wrote {data.n} records with {data.p} covariates to {out / 'data.csv'}")
    return EXIT_OK


def _fit_with_smoothing(spec: ModelSpec, data: SurvivalDataset, cfg: dict):
    lik = Likelihood(ModelDesign(spec, data))
    sm = cfg.get("smoothing", {})
    lambdas = sm.get("lambdas")
    if lambdas is not None or lik.design.n_smooth == 0:
        return trust_region_fit(lik, lambdas)
    return select_smoothing(lik, sm.get("criterion", "AIC")).fit


def _svg_curves(curves, path: Path) -> None:
    """A bare polyline plot of the survival curves (quick inspection only)."""
    w, h, pad = 480, 320, 40
    tmax = max(float(c[0][-1]) for c in curves)
    colors = ("#1f77b4", "#d62728")
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
             f'<rect width="{w}" height="{h}" fill="white"/>',
             f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="black"/>']
    for (t, s, lo, up), col in zip(curves, colors):
        for y, dash in ((s, ""), (lo, ' stroke-dasharray="4 3"'), (up, ' stroke-dasharray="4 3"')):
            pts = " ".join(f"{pad + (w - 2 * pad) * ti / tmax:.1f},{h - pad - (h - 2 * pad) * yi:.1f}"
                           for ti, yi in zip(t, y))
            parts.append(f'<polyline fill="none" stroke="{col}"{dash} points="{pts}"/>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def cmd_fit(args, cfg) -> int:
    data = _load_data(args, cfg)
    spec = _model_spec(args, cfg, data)
    fit = _fit_with_smoothing(spec, data, cfg)
    out = _out_dir(args, cfg)
    report = fit_report(fit)
    _write_json(out / "fit_report.json", report)
    plots = cfg.get("plots", {})
    profile = plots.get("profile")
    curves = []
    for m in (1, 2):
        c = survival_curve(fit, m, plots.get(f"t{m}"), profile)
        curves.append(c)
        _write_csv(out / f"baseline_survival_{m}.csv", ["t", "S", "lower", "upper"], zip(*c))
    if plots.get("contour"):
        size = int(plots.get("grid_size", 40))
        grids = []
        for m in (1, 2):
            b = fit.design.pred[m - 1].baseline
            grids.append(np.asarray(plots.get(f"t{m}") or np.linspace(0.0, b.upper, size), float))
        S = joint_survival_grid(fit, grids[0], grids[1], profile)
        rows = ((t1, t2, S[i, j]) for i, t1 in enumerate(grids[0]) for j, t2 in enumerate(grids[1]))
        _write_csv(out / "joint_survival.csv", ["t1", "t2", "S"], rows)
    if plots.get("svg"):
        _svg_curves(curves, out / "baseline_survival.svg")
    dep = report["dependence"]
    print(f"loglik {fit.loglik:.4f}  edf {fit.edf:.3f}  AIC {fit.aic:.3f}  BIC {fit.bic:.3f}")
    if dep["tau"] is not None:
        print(f"theta {dep['theta']}  tau {dep['tau']}")
    if not fit.converged:
        print(f"fit did not converge: {fit.diagnostics.get('message')}, "
              f"largest gradient {fit.grad_norm:.3g}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _brbvs_params(args, cfg) -> BRBVSParams:
    d = dict(cfg.get("brbvs", {}))
    overrides = {"metric": args.metric, "copula": args.copula, "k_max": args.kmax,
                 "tau": args.tau, "B": args.B, "m": args.m}
    for k, v in overrides.items():
        if v is not None:
            d[k] = v
    if args.margins:
        d["links"] = list(_margins_arg(args.margins))
    d["seed"] = _seed(args, cfg)
    return BRBVSParams.from_dict(d)


def cmd_select(args, cfg) -> int:
    data = _load_data(args, cfg)
    params = _brbvs_params(args, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        res = brbvs_run(data, params, workers=_workers(args, cfg))
    out = _out_dir(args, cfg)
    (out / "brbvs_result.json").write_text(res.to_json() + "\n")
    summary = res.summary()
    (out / "brbvs_summary.txt").write_text(summary)
    _write_csv(out / "brbvs_bars.csv", ["covariate", "margin", "selection_frequency"],
               res.bar_chart_rows())
    print(summary, end="")
    return EXIT_OK


def cmd_choose(args, cfg) -> int:
    data = _load_data(args, cfg)
    base = _model_spec(args, cfg, data)
    rows = []
    for fam in ("N", "C0", "PL"):
        for l1 in ("PH", "PO"):
            for l2 in ("PH", "PO"):
                spec = ModelSpec(fam, (l1, l2), base.eta1, base.eta2, base.eta3)
                row = {"copula": fam, "link1": l1, "link2": l2}
                try:
                    fit = _fit_with_smoothing(spec, data, cfg)
                    row.update(loglik=fit.loglik, edf=fit.edf, aic=fit.aic, bic=fit.bic,
                               converged=fit.converged, error="")
                except (NumericalError, DomainError) as exc:
                    row.update(loglik=float("nan"), edf=float("nan"), aic=float("inf"),
                               bic=float("inf"), converged=False, error=str(exc))
                rows.append(row)

    def key(crit):
        return lambda r: (not r["converged"], r[crit], r["copula"], r["link1"], r["link2"])

    for crit in ("aic", "bic"):
        for rank, r in enumerate(sorted(rows, key=key(crit)), start=1):
            r[f"rank_{crit}"] = rank
    rows.sort(key=key("aic"))
    out = _out_dir(args, cfg)
    header = ["rank_aic", "rank_bic", "copula", "link1", "link2", "loglik", "edf", "aic", "bic",
              "converged", "error"]
    _write_csv(out / "choose.csv", header, ([r[h] for h in header] for r in rows))
    for r in rows:
        print(f"{r['rank_aic']:2d} {r['copula']:>2} {r['link1']} {r['link2']}  "
              f"AIC {r['aic']:.3f}  BIC {r['bic']:.3f} (rank {r['rank_bic']})")
    return EXIT_OK


def cmd_bench(args, cfg) -> int:
    bench = cfg.get("bench", {})
    grid = bench.get("grid") or [{"scenario": "A", "n": 800, "p": 20}]
    n_rep = int(bench.get("n_rep", 20))
    metrics = bench.get("metrics") or ["FIM", "Abs"]
    params = _brbvs_params(args, cfg)
    seed = _seed(args, cfg)
    base = dict(cfg.get("scenario", {}))
    results = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for cell in grid:
            sc = {**base, **cell}
            if args.scenario:
                sc["scenario"] = args.scenario
            config = ScenarioConfig.from_dict(sc)
            results.append(run_benchmark(config, params, n_rep, seed, metrics,
                                         workers=_workers(args, cfg)))
    out = _out_dir(args, cfg)
    (out / "bench_table.csv").write_text(table_csv(results))
    (out / "bench_sets.csv").write_text(set_freq_csv(results))
    _write_json(out / "bench_log.json",
                [{"scenario": r.config.to_dict(), "replicates": r.log} for r in results])
    print(table_csv(results), end="")
    failed = sum(r.n_failed for r in results)
    if failed:
        print(f"{failed} replicate(s) failed; see bench_log.json", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "select": cmd_select,
            "choose": cmd_choose, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brbvs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--data")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--metric", choices=["FIM", "Abs", "CE"])
        p.add_argument("--copula", choices=[f.value for f in CopulaFamily])
        p.add_argument("--margins", help="two links, e.g. PH,PO")
        p.add_argument("--kmax", type=int)
        p.add_argument("--tau", type=float)
        p.add_argument("--B", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--scenario", choices=["A", "B"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
