import csv
import json
from pathlib import Path

import numpy as np
import pytest

from peerperf import pipeline
from peerperf.data_ingest import EmissionsRecord, EmissionsTable, month_end
from peerperf.errors import CoverageError, DomainError
from peerperf.pipeline import (
    RunConfig,
    evaluation_window,
    fmt,
    formation_months,
    group_ratios,
    load_inputs,
    read_ratios,
    run_backtest,
    run_to_directory,
    series_from_rows,
)
from peerperf.synth_oracle import SimSpec, business_days, simulate_panel

DATA = Path(__file__).parent / "data"
STUDY_CALENDAR = business_days("2014-01-01", 1827)


def test_study_calendar_reaches_year_end():
    assert str(STUDY_CALENDAR[-1]) == "2020-12-31"


def test_window_first_example():
    first, last, T = evaluation_window("2014-01", 3, STUDY_CALENDAR)
    assert str(first) == "2014-02-03"
    assert str(last) == "2014-04-30"
    days = STUDY_CALENDAR[(STUDY_CALENDAR >= first) & (STUDY_CALENDAR <= last)]
    assert T == days.size
    assert set(days.astype("datetime64[M]").astype(str)) == {"2014-02", "2014-03", "2014-04"}


def test_window_length_near_21h():
    for h in (3, 6, 12):
        T = evaluation_window("2015-06", h, STUDY_CALENDAR)[2]
        assert abs(T - 21.7 * h) < 0.1 * 21.7 * h


def test_consecutive_windows_share_eleven_months():
    a0, a1, _ = evaluation_window("2016-03", 12, STUDY_CALENDAR)
    b0, b1, _ = evaluation_window("2016-04", 12, STUDY_CALENDAR)
    shared = STUDY_CALENDAR[(STUDY_CALENDAR >= max(a0, b0)) & (STUDY_CALENDAR <= min(a1, b1))]
    assert np.unique(shared.astype("datetime64[M]")).size == 11


def test_window_at_calendar_end():
    with pytest.raises(CoverageError) as info:
        evaluation_window("2020-10", 3, STUDY_CALENDAR)
    assert info.value.months == ["2020-10"]


# ending months 2020-09, 2020-06 and 2019-12; the h = 6 span 2014-01..2020-06 holds 78 months
@pytest.mark.parametrize("h,count,last", [(3, 81, "2020-09"), (6, 78, "2020-06"),
                                          (12, 72, "2019-12")])
def test_formation_month_counts(h, count, last):
    months = formation_months("2014-01", "2020-12", h, STUDY_CALENDAR)
    assert months.size == count
    assert str(months[0]) == "2014-01"
    assert str(months[-1]) == last


def test_interior_gap_listed():
    cal = STUDY_CALENDAR[(STUDY_CALENDAR < np.datetime64("2015-03-01"))
                         | (STUDY_CALENDAR >= np.datetime64("2015-04-01"))]
    with pytest.raises(CoverageError) as info:
        formation_months("2014-01", "2020-12", 3, cal)
    assert info.value.months == ["2014-12", "2015-01", "2015-02"]


def test_config_validation():
    with pytest.raises(DomainError, match="horizon must be one of 3,6,12"):
        RunConfig(horizons=(5,))
    with pytest.raises(DomainError):
        RunConfig(q_lo=0.8, q_hi=0.7)
    with pytest.raises(DomainError):
        RunConfig(start="2015-01", end="2014-01")
    with pytest.raises(DomainError):
        RunConfig.from_dict({"bogus": 1})
    cfg = RunConfig(horizons=[3, 12], seed=4)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_fmt():
    assert fmt(0.123456789012345) == "0.123456789"
    assert fmt(1 / 3) == "0.3333333333"
    assert fmt(7) == "7"
    assert fmt(float("nan")) == ""


# ---------------------------------------------------------------------------
# group computation


def test_group_ratios_closure_and_floor(rng):
    T, N = 63, 14
    F = rng.standard_normal((T, 4)) * 0.01
    R = F @ rng.normal(1, 0.2, (4, N)) + 0.01 * rng.standard_normal((T, N))
    R[:10, 3] = np.nan  # 53 observations: dropped
    firms = [f"F{i}" for i in range(N)]
    res = group_ratios(R, F, firms, n_boot=100, seed_key=("k",), diagnostics=True)
    assert res.n_formed == 14 and res.n_eligible == 13 and res.n_rated == 13
    agg = res.ratios
    assert abs(agg.pi_minus + agg.pi_plus - (1 - agg.pi0)) <= 1e-12
    assert 0 <= res.corr_within <= 1


def test_group_ratios_too_few_peers(rng):
    T, N = 80, 10
    F = rng.standard_normal((T, 4)) * 0.01
    R = 0.01 * rng.standard_normal((T, N))
    res = group_ratios(R, F, list("abcdefghij"), n_boot=50)
    assert res.ratios is None and res.n_rated == 0


def test_no_information_leak(monkeypatch):
    spec = SimSpec(n_firms=24, n_days=200, seed=3)
    rp, fp, em, _ = simulate_panel(spec)
    # a release dated just after each formation month must never be used
    late = [EmissionsRecord(f, 2013, 1e9, 0, 0, 1.0, month_end("2014-03") + 1)
            for f in rp.firm_ids[:6]]
    table = EmissionsTable([r for r in em.records() if r.fiscal_year != 2013] + late)

    seen = []
    original = EmissionsTable.latest_record

    def spy(self, firm_id, as_of):
        rec = original(self, firm_id, as_of)
        seen.append((as_of, rec))
        return rec

    monkeypatch.setattr(EmissionsTable, "latest_record", spy)
    cfg = RunConfig(start="2014-01", end="2014-06", horizons=(3,), n_boot_pi0=20)
    run_backtest(cfg, rp, {"carhart4": fp}, table, diagnostics=False)
    assert seen
    for as_of, rec in seen:
        assert as_of in {month_end(m) for m in ("2014-01", "2014-02", "2014-03", "2014-04",
                                                "2014-05", "2014-06")}
        if rec is not None:
            assert rec.release_date <= as_of
            assert not (rec.fiscal_year == 2013 and as_of <= month_end("2014-03"))


def test_no_information_leak_assertion():
    table = EmissionsTable([EmissionsRecord("A", 2013, 1, 1, 1, 1.0, np.datetime64("2014-04-15"))])
    assert table.latest_record("A", "2014-03") is None
    assert table.latest_record("A", "2014-04") is not None


# ---------------------------------------------------------------------------
# fixture runs


@pytest.fixture(scope="module")
def fixture_run(fixture_config, tmp_path_factory):
    cfg = json.loads(fixture_config.read_text())
    base = fixture_config.parent
    cfg = RunConfig.from_dict({**cfg, "returns": str(base / cfg["returns"]),
                               "emissions": str(base / cfg["emissions"]),
                               "factors": {k: str(base / v) for k, v in cfg["factors"].items()},
                               "output_dir": str(tmp_path_factory.mktemp("run1"))})
    inputs = load_inputs(cfg)
    result, rows = run_to_directory(cfg, threads=1, inputs=inputs)
    return cfg, inputs, result


def test_fixture_outputs(fixture_run):
    cfg, _, result = fixture_run
    out = result.manifest["config"]["output_dir"]
    rows = read_ratios(f"{out}/ratios.csv")
    assert len(rows) == 29 * 3
    for r in rows:
        assert abs(r["pi_minus"] + r["pi_plus"] - (1 - r["pi0"])) <= 1e-9
        assert r["heterogeneity"] == pytest.approx(1 - r["pi0"], abs=1e-9)
    manifest = json.loads(open(f"{out}/manifest.json").read())
    assert manifest["evaluation_dates"] == {"3": 29}
    assert manifest["ending_month"] == {"3": "2016-05"}
    assert manifest["inference"]["kernel"] == "quadratic_spectral"
    assert manifest["inference"]["reference_distribution"] == "normal"
    with open(f"{out}/summary.csv") as fh:
        header = next(csv.reader(fh))
    assert header[:5] == ["model", "metric", "horizon", "group", "statistic"]


def test_fixture_golden_snapshot(fixture_run):
    _, _, result = fixture_run
    out = result.manifest["config"]["output_dir"]
    got = open(f"{out}/ratios.csv", "rb").read()
    assert got == (DATA / "golden_ratios.csv").read_bytes()


def test_thread_count_invariance(fixture_run, tmp_path):
    cfg, inputs, first = fixture_run
    out = first.manifest["config"]["output_dir"]
    for threads in (4, 16):
        d = tmp_path / f"t{threads}"
        run_to_directory(pipeline.with_overrides(cfg, output_dir=str(d)), threads=threads,
                         inputs=inputs)
        for name in ("ratios.csv", "summary.csv"):
            assert (d / name).read_bytes() == open(f"{out}/{name}", "rb").read()


def test_series_round_trip(fixture_run):
    _, _, result = fixture_run
    out = result.manifest["config"]["output_dir"]
    back = series_from_rows(read_ratios(f"{out}/ratios.csv"))
    for key, s in result.series.items():
        np.testing.assert_array_equal(back[key].months, s.months)
        np.testing.assert_array_equal(back[key].values, s.values)
