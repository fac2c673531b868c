"""Monthly loop: form peer groups, test all pairs, aggregate ratios, summarize.

For formation month ``m`` and horizon ``h`` the evaluation window runs from the
first trading day after the end of ``m`` to the last trading day of month
``m + h``.  Groups are formed from emissions released on or before the last
calendar day of ``m``.  Months whose window is not fully covered by the
return calendar are dropped from the end of the series.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data_ingest import (
    FACTOR_COLUMNS,
    form_peer_groups,
    load_emissions,
    load_factor_panel,
    load_return_panel,
    month_end,
    month_range,
    to_month,
)
from .econometrics import HAC_METADATA, MIN_PAIR_OBS, pairwise_alpha_tests
from .errors import CoverageError, DomainError, InsufficientDataError
from .peer_ratios import (
    DEFAULT_GAMMA,
    DEFAULT_LAMBDA_GRID,
    DEFAULT_N_BOOT,
    MIN_PEERS,
    AggregateRatios,
    PairEvidence,
    aggregate_ratios,
    stable_seed,
    stock_ratio_triple,
)
from .trend import RatioSeries, SummaryRow, summarize_series, trend_difference

HORIZONS = (3, 6, 12)
GROUPS = ("brown", "green", "neutral")
METRICS = ("heterogeneity", "pi_minus", "pi_plus")
RATIO_COLUMNS = ("formation_month", "group", "horizon", "model", "pi0", "pi_minus",
                 "pi_plus", "heterogeneity", "n_firms")


def fmt(x) -> str:
    """Float serialization used by every output file (10 significant digits)."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


@dataclass
class RunConfig:
    start: str = "2014-01"
    end: str = "2020-12"
    horizons: tuple = (3, 6, 12)
    models: tuple = ("carhart4",)
    q_lo: float = 0.25
    q_hi: float = 0.75
    gamma: float = DEFAULT_GAMMA
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    min_obs: int = MIN_PAIR_OBS
    n_boot_pi0: int = DEFAULT_N_BOOT
    n_boot_trend: int = 2000
    seed: int = 0
    returns: str | None = None
    factors: dict = field(default_factory=dict)
    emissions: str | None = None
    output_dir: str = "out"

    def __post_init__(self):
        self.horizons = tuple(int(h) for h in self.horizons)
        self.models = tuple(self.models)
        self.lambda_grid = tuple(float(x) for x in self.lambda_grid)
        self.validate()

    def validate(self):
        if not self.horizons:
            raise DomainError("horizons must be non-empty")
        bad = [h for h in self.horizons if h not in HORIZONS]
        if bad:
            raise DomainError("horizon must be one of 3,6,12")
        for m in self.models:
            if m not in FACTOR_COLUMNS:
                raise DomainError(f"model must be one of {','.join(FACTOR_COLUMNS)}")
        if not to_month(self.start) < to_month(self.end):
            raise DomainError(f"start {self.start} must precede end {self.end}")
        if not 0 < self.q_lo < self.q_hi < 1:
            raise DomainError("need 0 < q_lo < q_hi < 1")
        if not 0 < self.gamma < 1:
            raise DomainError("gamma must lie in (0, 1)")
        if self.min_obs < 2:
            raise DomainError("min_obs must be at least 2")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["horizons"] = list(self.horizons)
        d["models"] = list(self.models)
        d["lambda_grid"] = list(self.lambda_grid)
        return d


# ---------------------------------------------------------------------------
# windows


def _first_bday(month):
    day = np.datetime64(np.datetime64(month, "M"), "D")
    return np.busday_offset(day, 0, roll="forward")


def _last_bday(month):
    return np.busday_offset(month_end(month), 0, roll="backward")


def window_covered(month, horizon, calendar) -> bool:
    m = to_month(month)
    return bool(calendar.size and calendar[0] <= _first_bday(m + 1)
                and calendar[-1] >= _last_bday(m + horizon))


def evaluation_window(month, horizon, calendar):
    """``(first_day, last_day, T)`` of the forward window for formation month ``month``.

    Raises :class:`CoverageError` when the calendar does not span the window.
    """
    calendar = np.asarray(calendar, dtype="datetime64[D]")
    m = to_month(month)
    if not window_covered(m, horizon, calendar):
        raise CoverageError(
            f"window for {m} with horizon {horizon} is not covered by the calendar "
            f"({calendar[0] if calendar.size else None} .. "
            f"{calendar[-1] if calendar.size else None})", [str(m)])
    lo = np.searchsorted(calendar, month_end(m), side="right")
    hi = np.searchsorted(calendar, month_end(m + horizon), side="right")
    if hi <= lo:
        raise CoverageError(f"no trading days in the window for {m}", [str(m)])
    return calendar[lo], calendar[hi - 1], int(hi - lo)


def formation_months(start, end, horizon, calendar):
    """Formation months in [start, end] with a fully covered window.

    Trailing months without coverage are dropped; an uncovered month before a
    covered one, or a calendar month with no trading days inside a window,
    raises :class:`CoverageError` listing the affected formation months.
    """
    months = month_range(start, end)
    covered = np.array([window_covered(m, horizon, calendar) for m in months])
    if not covered.any():
        raise CoverageError(f"no formation month in {start}..{end} has a covered "
                            f"{horizon}-month window", [str(m) for m in months])
    last = int(np.flatnonzero(covered)[-1])
    gaps = [str(m) for m in months[:last + 1][~covered[:last + 1]]]
    trading_months = set(calendar.astype("datetime64[M]").tolist())
    for m in months[:last + 1]:
        window_months = [m + k for k in range(1, horizon + 1)]
        if any(w.tolist() not in trading_months for w in window_months):
            if str(m) not in gaps:
                gaps.append(str(m))
    if gaps:
        raise CoverageError(f"missing data for the windows of formation months: "
                            f"{', '.join(sorted(gaps))}", sorted(gaps))
    return months[:last + 1]


# ---------------------------------------------------------------------------
# group computation


@dataclass
class GroupResult:
    ratios: AggregateRatios | None
    n_formed: int
    n_eligible: int
    n_rated: int
    corr_within: float = math.nan


def group_ratios(R, F, firm_ids, *, min_obs=MIN_PAIR_OBS, gamma=DEFAULT_GAMMA,
                 lambda_grid=DEFAULT_LAMBDA_GRID, n_boot=DEFAULT_N_BOOT, seed_key=(0,),
                 month=None, horizon=None, diagnostics=False) -> GroupResult:
    """Aggregate ratios for one peer group over one evaluation window.

    ``R`` holds the window's returns for the group's firms (columns in the
    order of ``firm_ids``) and ``F`` the aligned factor returns.  Firms with
    fewer than ``min_obs`` returns are dropped; pairs with fewer than
    ``min_obs`` common days are left out of both firms' evidence; firms with
    fewer than ten usable peers receive no triple.
    """
    R = np.asarray(R, dtype=float)
    firm_ids = list(firm_ids)
    n_formed = len(firm_ids)
    keep = np.flatnonzero((~np.isnan(R)).sum(axis=0) >= min_obs)
    R = R[:, keep]
    firms = [firm_ids[k] for k in keep]
    N = len(firms)
    if N < 2:
        return GroupResult(None, n_formed, N, 0)
    iu, ju = np.triu_indices(N, 1)
    pairs = np.column_stack([iu, ju])
    batch = pairwise_alpha_tests(R, F, pairs, min_obs=min_obs, keep_influence=diagnostics)

    pmat = np.full((N, N), np.nan)
    smat = np.zeros((N, N), dtype=int)
    v = batch.valid
    sign = np.sign(batch.delta_alpha[v]).astype(int)
    pmat[iu[v], ju[v]] = batch.p_value[v]
    pmat[ju[v], iu[v]] = batch.p_value[v]
    smat[iu[v], ju[v]] = sign
    smat[ju[v], iu[v]] = -sign

    triples = []
    for a, firm in enumerate(firms):
        ok = ~np.isnan(pmat[a])
        if ok.sum() < MIN_PEERS:
            continue
        ev = PairEvidence(pmat[a, ok], smat[a, ok])
        rng = np.random.default_rng(stable_seed(*seed_key, firm))
        triples.append(stock_ratio_triple(ev, lambda_grid=lambda_grid, gamma=gamma,
                                          n_boot=n_boot, rng=rng))
    agg = aggregate_ratios(triples, month, horizon) if triples else None

    corr_within = math.nan
    if diagnostics and v.sum() > 1:
        infl = batch.influence[v]
        sd = infl.std(axis=1)
        good = sd > 0
        if good.sum() > 1:
            C = np.corrcoef(infl[good])
            off = C[np.triu_indices(C.shape[0], 1)]
            corr_within = float(np.mean(np.abs(off) <= 0.5))
    return GroupResult(agg, n_formed, N, len(triples), corr_within)


# ---------------------------------------------------------------------------
# backtest


@dataclass
class BacktestResult:
    rows: list
    manifest: dict
    series: dict

    def ratio_series(self, model, horizon, group, metric="heterogeneity"):
        return self.series[(model, horizon, group, metric)]


def _month_task(args):
    (model, h, m, groups, returns, F_all, fac_cal, cfg, diagnostics) = args
    first, last, _ = evaluation_window(m, h, returns.calendar)
    rows_idx = (returns.calendar >= first) & (returns.calendar <= last)
    cal = returns.calendar[rows_idx]
    fidx = np.searchsorted(fac_cal, cal)
    if np.any(fidx >= fac_cal.size) or np.any(fac_cal[np.minimum(fidx, fac_cal.size - 1)] != cal):
        raise CoverageError(f"factor data for {model} missing inside the window of {m}", [str(m)])
    F = F_all[fidx]
    col = {f: j for j, f in enumerate(returns.firm_ids)}
    out = {}
    for g in GROUPS:
        members = groups.members(g)
        R = returns.returns[rows_idx][:, [col[f] for f in members]]
        out[g] = group_ratios(
            R, F, members, min_obs=cfg.min_obs, gamma=cfg.gamma,
            lambda_grid=cfg.lambda_grid, n_boot=cfg.n_boot_pi0,
            seed_key=(cfg.seed, model, h, str(m), g), month=m, horizon=h,
            diagnostics=diagnostics)
    return out


def run_backtest(config: RunConfig, returns, factors, emissions, *, threads=1,
                 diagnostics=True) -> BacktestResult:
    """Compute monthly aggregate ratios for every (model, horizon, group).

    ``factors`` maps model id to :class:`FactorPanel`.  Output rows are ordered
    by model, horizon, formation month and group regardless of ``threads``.
    """
    cal = returns.calendar
    months_by_h = {h: formation_months(config.start, config.end, h, cal) for h in config.horizons}
    all_months = sorted({m for ms in months_by_h.values() for m in ms.tolist()})
    universe = returns.firm_ids
    groups_by_month = {}
    for m in all_months:
        groups_by_month[m] = form_peer_groups(emissions, universe, month_end(m),
                                              config.q_lo, config.q_hi)

    tasks = []
    for model in config.models:
        if model not in factors:
            raise DomainError(f"no factor panel supplied for model {model}")
        fp = factors[model]
        for h in config.horizons:
            for m in months_by_h[h]:
                tasks.append((model, h, m, groups_by_month[m.tolist()], returns,
                              fp.factors, fp.calendar, config, diagnostics))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_month_task, tasks))
    else:
        results = [_month_task(t) for t in tasks]

    rows = []
    effective = []
    series_vals = {}
    corr_diag = {}
    for task, res in zip(tasks, results):
        model, h, m = task[0], task[1], task[2]
        for g in GROUPS:
            r = res[g]
            agg = r.ratios
            vals = ((agg.pi0, agg.pi_minus, agg.pi_plus, agg.heterogeneity)
                    if agg is not None else (math.nan,) * 4)
            rows.append({"formation_month": str(m), "group": g, "horizon": h, "model": model,
                         "pi0": vals[0], "pi_minus": vals[1], "pi_plus": vals[2],
                         "heterogeneity": vals[3], "n_firms": r.n_rated})
            effective.append({"formation_month": str(m), "horizon": h, "model": model,
                              "group": g, "formed": r.n_formed, "eligible": r.n_eligible,
                              "rated": r.n_rated})
            if not math.isnan(r.corr_within):
                corr_diag.setdefault(f"{model}/h{h}/{g}", []).append(r.corr_within)
            for metric, val in zip(("heterogeneity", "pi_minus", "pi_plus"),
                                   (vals[3], vals[1], vals[2])):
                series_vals.setdefault((model, h, g, metric), []).append((m, val))

    # series carry the written precision so that summaries rebuilt from
    # ratios.csv match the ones written here
    series = {}
    for (model, h, g, metric), pts in series_vals.items():
        pts = [(m, float(fmt(v))) for m, v in pts if not math.isnan(v)]
        series[(model, h, g, metric)] = RatioSeries(
            np.array([p[0] for p in pts], dtype="datetime64[M]"),
            np.clip(np.array([p[1] for p in pts], dtype=float), 0.0, 1.0),
            group=g, horizon=h, metric=metric, model=model)

    manifest = {
        "config": config.to_dict(),
        "software_version": __version__,
        "evaluation_dates": {str(h): int(len(months_by_h[h])) for h in config.horizons},
        "ending_month": {str(h): str(months_by_h[h][-1]) for h in config.horizons},
        "group_sizes": effective,
        "inference": {**HAC_METADATA, "pi0_bootstrap_resamples": config.n_boot_pi0,
                      "gamma": config.gamma, "lambda_grid": list(config.lambda_grid),
                      "trend_bootstrap_resamples": config.n_boot_trend,
                      "trend_seed": config.seed},
        "test_statistic_correlation": {
            k: {"mean_share_abs_corr_le_0.5": float(np.mean(v))}
            for k, v in sorted(corr_diag.items())},
    }
    return BacktestResult(rows, manifest, series)


def summary_rows(series, *, n_boot=2000, seed=0, robust=True):
    """Summary rows for brown and green series, with neutral heterogeneity as control."""
    controls = {(model, h): s for (model, h, g, metric), s in series.items()
                if g == "neutral" and metric == "heterogeneity"}
    chosen = [s for (model, h, g, metric), s in sorted(series.items(), key=_series_order)
              if g in ("brown", "green")]
    aligned = {}
    for s in chosen:
        c = controls.get((s.model, s.horizon))
        if c is not None and not np.array_equal(c.months, s.months):
            common = np.intersect1d(c.months, s.months)
            c = RatioSeries(common, c.values[np.isin(c.months, common)], c.group, c.horizon,
                            c.metric, c.model)
            s = RatioSeries(common, s.values[np.isin(s.months, common)], s.group, s.horizon,
                            s.metric, s.model)
        aligned[(s.model, s.horizon, s.group, s.metric)] = (s, c)
    rows = []
    for key, (s, c) in aligned.items():
        ctrl = {(s.model, s.horizon): c} if c is not None else {}
        rows += summarize_series([s], ctrl, robust=robust, n_boot=n_boot, seed=seed)
    for (model, h, g, metric), (s, _) in aligned.items():
        if g != "brown":
            continue
        other = aligned.get((model, h, "green", metric))
        if other is None:
            continue
        gs = other[0]
        common = np.intersect1d(s.months, gs.months)
        a = RatioSeries(common, s.values[np.isin(s.months, common)])
        b = RatioSeries(common, gs.values[np.isin(gs.months, common)])
        try:
            r = trend_difference(a, b)
        except (InsufficientDataError, ValueError):
            continue
        rows.append(SummaryRow(model, metric, h, "brown_minus_green", "trend_difference",
                               r.scaled_slope, r.se * 1000.0, r.p_value, r.estimator))
    return rows


def _series_order(item):
    (model, h, g, metric), _ = item
    return (model, METRICS.index(metric), h, GROUPS.index(g))


# ---------------------------------------------------------------------------
# files


SUMMARY_COLUMNS = ("model", "metric", "horizon", "group", "statistic", "value", "se",
                   "p_value", "stars", "estimator")


def write_ratios(rows, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATIO_COLUMNS)
        for r in rows:
            w.writerow([r["formation_month"], r["group"], r["horizon"], r["model"],
                        fmt(r["pi0"]), fmt(r["pi_minus"]), fmt(r["pi_plus"]),
                        fmt(r["heterogeneity"]), r["n_firms"]])


def read_ratios(path):
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            for c in ("pi0", "pi_minus", "pi_plus", "heterogeneity"):
                r[c] = float(r[c]) if r[c] != "" else math.nan
            r["horizon"] = int(r["horizon"])
            r["n_firms"] = int(r["n_firms"])
            rows.append(r)
    return rows


def series_from_rows(rows):
    pts = {}
    for r in rows:
        for metric in METRICS:
            v = r[metric]
            if not math.isnan(v):
                pts.setdefault((r["model"], r["horizon"], r["group"], metric), []).append(
                    (np.datetime64(r["formation_month"], "M"), v))
    out = {}
    for (model, h, g, metric), p in pts.items():
        p.sort()
        out[(model, h, g, metric)] = RatioSeries(
            np.array([x[0] for x in p], dtype="datetime64[M]"),
            np.clip([x[1] for x in p], 0.0, 1.0), group=g, horizon=h, metric=metric, model=model)
    return out


def write_summary(rows, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r.model, r.metric, r.horizon, r.group, r.statistic, fmt(r.value),
                        fmt(r.se), fmt(r.p_value), r.stars, r.estimator])


def write_manifest(manifest, path):
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_inputs(config: RunConfig):
    """Read the returns, factor and emissions files named in ``config``."""
    if config.returns is None or config.emissions is None:
        raise DomainError("config must name returns and emissions files")
    returns = load_return_panel(config.returns)
    factors = {}
    for model in config.models:
        path = config.factors.get(model)
        if path is None:
            raise DomainError(f"config names no factor file for model {model}")
        factors[model] = load_factor_panel(path, model)
    emissions = load_emissions(config.emissions)
    return returns, factors, emissions


def run_to_directory(config: RunConfig, *, threads=1, inputs=None):
    """Run the backtest and write ratios.csv, summary.csv and manifest.json."""
    returns, factors, emissions = inputs if inputs is not None else load_inputs(config)
    result = run_backtest(config, returns, factors, emissions, threads=threads)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_ratios(result.rows, out / "ratios.csv")
    rows = summary_rows(result.series, n_boot=config.n_boot_trend, seed=config.seed)
    write_summary(rows, out / "summary.csv")
    write_manifest(result.manifest, out / "manifest.json")
    return result, rows


def with_overrides(config: RunConfig, **kw) -> RunConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
