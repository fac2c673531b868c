"""Command-line entry point: ``peerperf {ingest-check,run,summarize,simulate,plot}``.

Exit codes: 0 success, 1 internal error, 2 usage or validation error.  Errors
are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_ingest import (
    FACTOR_COLUMNS,
    load_emissions,
    load_factor_panel,
    load_return_panel,
    write_emissions,
    write_factor_panel,
    write_return_panel,
)
from .errors import (
    AlignmentError,
    CoverageError,
    DomainError,
    ParseError,
    PeerPerfError,
    ValidationError,
)
from .pipeline import (
    GROUPS,
    METRICS,
    RunConfig,
    read_ratios,
    run_to_directory,
    series_from_rows,
    summary_rows,
    write_summary,
)
from .plot import render_svg
from .synth_oracle import SimSpec, simulate_panel
from .trend import linear_trend, trend_design

USAGE_ERRORS = (FileNotFoundError, ValidationError, ParseError, DomainError, CoverageError,
                AlignmentError, json.JSONDecodeError)


class UsageError(Exception):
    pass


def _horizon(text):
    try:
        h = int(text)
    except ValueError:
        h = None
    if h not in (3, 6, 12):
        raise UsageError("horizon must be one of 3,6,12")
    return h


def _model(text):
    if text not in FACTOR_COLUMNS:
        raise UsageError(f"model must be one of {','.join(FACTOR_COLUMNS)}")
    return text


def build_parser():
    p = argparse.ArgumentParser(prog="peerperf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    ic = sub.add_parser("ingest-check", help="validate input files")
    ic.add_argument("--config")
    ic.add_argument("--returns")
    ic.add_argument("--emissions")
    ic.add_argument("--factors", action="append", default=[], metavar="MODEL=PATH")
    ic.add_argument("--report", help="write the JSON report here instead of stdout")

    run = sub.add_parser("run", help="run the monthly peer-ratio backtest")
    run.add_argument("--config", required=True)
    run.add_argument("--start")
    run.add_argument("--end")
    run.add_argument("--horizon", action="append", dest="horizons")
    run.add_argument("--model", action="append", dest="models")
    run.add_argument("--q-lo", type=float, dest="q_lo")
    run.add_argument("--q-hi", type=float, dest="q_hi")
    run.add_argument("--gamma", type=float)
    run.add_argument("--min-obs", type=int, dest="min_obs")
    run.add_argument("--n-boot-pi0", type=int, dest="n_boot_pi0")
    run.add_argument("--n-boot-trend", type=int, dest="n_boot_trend")
    run.add_argument("--seed", type=int)
    run.add_argument("--returns")
    run.add_argument("--emissions")
    run.add_argument("--output-dir", dest="output_dir")
    run.add_argument("--threads", type=int, default=1)

    sm = sub.add_parser("summarize", help="summary table from ratios.csv")
    sm.add_argument("--ratios", required=True)
    sm.add_argument("--out", required=True)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--n-boot", type=int, default=2000)

    sim = sub.add_parser("simulate", help="write a synthetic input set")
    sim.add_argument("--out-dir", required=True)
    sim.add_argument("--n-firms", type=int, default=60)
    sim.add_argument("--n-days", type=int, default=1800)
    sim.add_argument("--model", default="carhart4")
    sim.add_argument("--start", default="2014-01-01")
    sim.add_argument("--residual-vol", type=float, default=0.01)
    sim.add_argument("--rho-x", type=float, default=0.0)
    sim.add_argument("--frac-negative", type=float, default=0.0)
    sim.add_argument("--frac-positive", type=float, default=0.0)
    sim.add_argument("--alpha", type=float, default=0.0, help="daily alpha magnitude, decimal")
    sim.add_argument("--missing-frac", type=float, default=0.0)
    sim.add_argument("--seed", type=int, default=0)

    pl = sub.add_parser("plot", help="SVG of one ratio series with its trend")
    pl.add_argument("--ratios", required=True)
    pl.add_argument("--metric", default="heterogeneity")
    pl.add_argument("--group", default="brown")
    pl.add_argument("--horizon", type=int)
    pl.add_argument("--model")
    pl.add_argument("--out", required=True)
    return p


def _read_config(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    for key in ("returns", "emissions", "output_dir"):
        if data.get(key) is not None and not Path(data[key]).is_absolute():
            data[key] = str(base / data[key])
    if "factors" in data:
        data["factors"] = {m: str(base / f) if not Path(f).is_absolute() else f
                           for m, f in data["factors"].items()}
    return data


def config_from_args(args, environ=None) -> RunConfig:
    """Config file, then PEERPERF_SEED, then command-line flags (flags win)."""
    environ = os.environ if environ is None else environ
    data = _read_config(args.config)
    if environ.get("PEERPERF_SEED"):
        data["seed"] = int(environ["PEERPERF_SEED"])
    if args.horizons:
        data["horizons"] = [_horizon(h) for h in args.horizons]
    if args.models:
        data["models"] = [_model(m) for m in args.models]
    for key in ("start", "end", "q_lo", "q_hi", "gamma", "min_obs", "n_boot_pi0",
                "n_boot_trend", "seed", "returns", "emissions", "output_dir"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    for h in data.get("horizons", ()):
        _horizon(str(h))
    return RunConfig.from_dict(data)


def cmd_ingest_check(args):
    paths = {"returns": args.returns, "emissions": args.emissions, "factors": {}}
    if args.config:
        data = _read_config(args.config)
        paths["returns"] = paths["returns"] or data.get("returns")
        paths["emissions"] = paths["emissions"] or data.get("emissions")
        paths["factors"].update(data.get("factors", {}))
    for item in args.factors:
        model, _, path = item.partition("=")
        paths["factors"][_model(model)] = path
    report = {"ok": True, "checks": []}

    def check(name, fn):
        try:
            info = fn()
            report["checks"].append({"input": name, "ok": True, **info})
        except USAGE_ERRORS as exc:
            report["ok"] = False
            report["checks"].append({"input": name, "ok": False, "error": str(exc)})

    if paths["returns"]:
        def _r():
            rp = load_return_panel(paths["returns"])
            return {"days": int(rp.shape[0]), "firms": int(rp.shape[1]),
                    "missing_cells": int((~rp.mask).sum()),
                    "first_date": str(rp.calendar[0]), "last_date": str(rp.calendar[-1])}
        check("returns", _r)
    for model, path in sorted(paths["factors"].items()):
        def _f(model=model, path=path):
            fp = load_factor_panel(path, model)
            return {"model": model, "days": int(fp.calendar.size), "k": fp.k}
        check(f"factors:{model}", _f)
    if paths["emissions"]:
        def _e():
            t = load_emissions(paths["emissions"])
            return {"records": len(t), "firms": len(t.firm_ids)}
        check("emissions", _e)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0 if report["ok"] else 2


def cmd_run(args):
    cfg = config_from_args(args)
    for path in [cfg.returns, cfg.emissions, *[cfg.factors.get(m) for m in cfg.models]]:
        if path is None or not Path(path).exists():
            raise FileNotFoundError(f"input file not found: {path}")
    result, _ = run_to_directory(cfg, threads=max(1, args.threads))
    print(json.dumps({"output_dir": cfg.output_dir,
                      "evaluation_dates": result.manifest["evaluation_dates"]}))
    return 0


def _wide_table(rows):
    cols = sorted({(r.horizon, r.group) for r in rows if r.group in ("brown", "green")},
                  key=lambda c: (c[0], GROUPS.index(c[1])))
    lines = []
    panels = sorted({(r.model, r.metric) for r in rows},
                    key=lambda k: (k[0], METRICS.index(k[1])))
    for model, metric in panels:
        lines.append(f"[{model}] {metric}")
        lines.append("statistic".ljust(34) + "".join(f"h{h} {g}".rjust(14) for h, g in cols))
        cell = {(r.statistic, r.horizon, r.group): r for r in rows
                if r.model == model and r.metric == metric}
        stats = list(dict.fromkeys(r.statistic for r in rows
                                   if r.model == model and r.metric == metric
                                   and r.group in ("brown", "green")))
        for st in stats:
            vals = []
            for h, g in cols:
                r = cell.get((st, h, g))
                vals.append("" if r is None or r.value != r.value else f"{r.value:.1f}{r.stars}")
            lines.append(st.ljust(34) + "".join(v.rjust(14) for v in vals))
        lines.append("")
    return "\n".join(lines)


def cmd_summarize(args):
    if not Path(args.ratios).exists():
        raise FileNotFoundError(f"no such file: {args.ratios}")
    series = series_from_rows(read_ratios(args.ratios))
    rows = summary_rows(series, n_boot=args.n_boot, seed=args.seed)
    write_summary(rows, args.out)
    sys.stdout.write(_wide_table(rows) + "\n")
    return 0


def cmd_simulate(args):
    try:
        spec = SimSpec(n_firms=args.n_firms, n_days=args.n_days, model_id=args.model,
                       residual_vol=args.residual_vol, rho_x=args.rho_x,
                       frac_negative=args.frac_negative, frac_positive=args.frac_positive,
                       alpha_magnitude=args.alpha, start=args.start,
                       missing_frac=args.missing_frac, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rp, fp, em, truth = simulate_panel(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_return_panel(rp, out / "returns.csv")
    write_factor_panel(fp, out / f"factors_{spec.model_id}.csv")
    write_emissions(em, out / "emissions.csv")
    (out / "truth.json").write_text(truth.to_json() + "\n", encoding="utf-8")
    return 0


def cmd_plot(args):
    if not Path(args.ratios).exists():
        raise FileNotFoundError(f"no such file: {args.ratios}")
    series = series_from_rows(read_ratios(args.ratios))
    matches = [k for k in series if k[3] == args.metric and k[2] == args.group
               and (args.horizon is None or k[1] == args.horizon)
               and (args.model is None or k[0] == args.model)]
    if len(matches) != 1:
        listing = ", ".join(f"model={m} horizon={h} group={g} metric={x}"
                            for m, h, g, x in sorted(series))
        reason = "no series matches" if not matches else "several series match"
        raise UsageError(f"{reason}; available series: {listing}")
    s = series[matches[0]]
    if len(s) >= 3:
        vals, X = trend_design(s)
        coef = np.linalg.lstsq(X, vals, rcond=None)[0]
        fitted = X @ coef
    else:
        fitted = np.full(len(s), s.values.mean())
    model, h, g, metric = matches[0]
    title = f"{metric} - {g} - h={h} - {model}"
    Path(args.out).write_text(render_svg(s.months, s.values, fitted, title), encoding="utf-8")
    return 0


COMMANDS = {
    "ingest-check": cmd_ingest_check,
    "run": cmd_run,
    "summarize": cmd_summarize,
    "simulate": cmd_simulate,
    "plot": cmd_plot,
}


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, *USAGE_ERRORS) as exc:
        return _fail(2, exc)
    except PeerPerfError as exc:
        return _fail(1, exc)
    except Exception as exc:  # noqa: BLE001
        return _fail(1, exc)


if __name__ == "__main__":
    sys.exit(main())
