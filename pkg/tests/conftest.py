import json
import time
from pathlib import Path

import numpy as np
import pytest

from peerperf.data_ingest import write_emissions, write_factor_panel, write_return_panel
from peerperf.synth_oracle import SimSpec, simulate_panel

DATA = Path(__file__).parent / "data"

# 60 firms, about 2.7 years of trading days: 29 formation months at h = 3
FIXTURE_SPEC = SimSpec(n_firms=60, n_days=700, model_id="carhart4", frac_negative=0.2,
                       frac_positive=0.1, alpha_magnitude=4e-4, missing_frac=0.01, seed=20140101)


def write_inputs(directory, spec, **config):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rp, fp, em, truth = simulate_panel(spec)
    write_return_panel(rp, directory / "returns.csv")
    write_factor_panel(fp, directory / f"factors_{spec.model_id}.csv")
    write_emissions(em, directory / "emissions.csv")
    cfg = {
        "start": "2014-01",
        "end": "2020-12",
        "horizons": [3],
        "models": [spec.model_id],
        "returns": "returns.csv",
        "emissions": "emissions.csv",
        "factors": {spec.model_id: f"factors_{spec.model_id}.csv"},
        "output_dir": "out",
        "seed": 7,
    }
    cfg.update(config)
    (directory / "config.json").write_text(json.dumps(cfg, indent=2), encoding="utf-8")
    return directory / "config.json"


@pytest.fixture(scope="session")
def fixture_config(tmp_path_factory):
    """Config path of the bundled 60-firm synthetic fixture."""
    return write_inputs(tmp_path_factory.mktemp("fixture"), FIXTURE_SPEC)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# study calendar (2014-01-01 .. 2020-12-31) at reduced N; 11 firms per tail group
STUDY_SPAN_SPEC = SimSpec(n_firms=44, n_days=1827, frac_negative=0.2, frac_positive=0.1,
                          alpha_magnitude=4e-4, seed=2014)


@pytest.fixture(scope="session")
def study_span_run(tmp_path_factory):
    """Output directory of a three-horizon run over the 2014-2020 study calendar."""
    from peerperf.cli import main

    cfg = write_inputs(tmp_path_factory.mktemp("study_span"), STUDY_SPAN_SPEC,
                       horizons=[3, 6, 12], n_boot_pi0=100, n_boot_trend=200)
    t0 = time.perf_counter()
    assert main(["run", "--config", str(cfg), "--threads", "4"]) == 0
    # run time kept next to the outputs for the acceptance runtime budget
    (cfg.parent / "run_seconds.txt").write_text(f"{time.perf_counter() - t0:.3f}\n")
    return cfg.parent / "out"


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
