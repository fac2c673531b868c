"""Synthetic panels with planted alphas and brute-force ratio oracles.

Returns follow ``r[t, i] = alpha_i + sum_k beta_ik F[t, k] + eps[t, i]`` where
the residuals share one common factor with loading ``sqrt(|rho_x|)``, giving a
cross-residual correlation of ``rho_x``.  For negative ``rho_x`` the loadings
alternate in sign, so pairs are correlated at ``+-|rho_x|``.

Alphas are daily decimals: 1 bp/day is 1e-4, about 2.5% a year over 252 days.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data_ingest import (
    FACTOR_COLUMNS,
    EmissionsRecord,
    EmissionsTable,
    FactorPanel,
    ReturnPanel,
)
from .peer_ratios import RatioTriple

DEFAULT_FACTOR_VOLS = {
    "mkt_rf": 0.010, "smb": 0.005, "hml": 0.005, "mom": 0.007, "rmw": 0.004, "cma": 0.004,
}


@dataclass(frozen=True)
class SimSpec:
    n_firms: int = 40
    n_days: int = 252
    model_id: str = "carhart4"
    factor_vols: tuple | None = None
    residual_vol: float = 0.01
    rho_x: float = 0.0
    frac_negative: float = 0.0
    frac_positive: float = 0.0
    alpha_magnitude: float = 0.0
    intensity_median: float = 80.0
    intensity_dispersion: float = 1.5
    start: str = "2014-01-01"
    missing_frac: float = 0.0
    seed: int = 0
    alphas: tuple | None = field(default=None)

    def __post_init__(self):
        if self.model_id not in FACTOR_COLUMNS:
            raise ValueError(f"unknown model_id {self.model_id!r}")
        if not -0.5 <= self.rho_x <= 0.5:
            raise ValueError("rho_x must lie in [-0.5, 0.5]")
        if self.frac_negative < 0 or self.frac_positive < 0 or (
                self.frac_negative + self.frac_positive > 1 + 1e-12):
            raise ValueError("alpha fractions must be non-negative and sum to at most 1")
        if self.n_firms < 2 or self.n_days < 2:
            raise ValueError("need at least two firms and two days")
        if self.alphas is not None and len(self.alphas) != self.n_firms:
            raise ValueError("explicit alphas must have one entry per firm")

    @property
    def k(self) -> int:
        return len(FACTOR_COLUMNS[self.model_id])

    @property
    def frac_zero(self) -> float:
        return 1.0 - self.frac_negative - self.frac_positive


@dataclass
class Truth:
    firm_ids: list
    alphas: list
    betas: list
    intensities: dict

    def alpha_of(self, firm):
        return self.alphas[self.firm_ids.index(firm)]

    def dominance_counts(self, firm, peers=None):
        """(worse, equal, better) peer counts by true alpha."""
        a = self.alpha_of(firm)
        peers = [f for f in (self.firm_ids if peers is None else peers) if f != firm]
        others = np.array([self.alpha_of(f) for f in peers])
        return (int(np.sum(others < a)), int(np.sum(others == a)), int(np.sum(others > a)))

    def to_json(self) -> str:
        rows = []
        for f in self.firm_ids:
            worse, equal, better = self.dominance_counts(f)
            rows.append({"firm_id": f, "alpha": self.alpha_of(f),
                         "n_worse": worse, "n_equal": equal, "n_better": better})
        return json.dumps({"firms": rows, "intensities": self.intensities}, indent=2,
                          sort_keys=True)


def business_days(start, n):
    """First ``n`` weekdays on or after ``start``."""
    start = np.datetime64(start, "D")
    days = np.arange(start, start + int(n * 1.5) + 10)
    days = days[np.is_busday(days)]
    return days[:n]


def _layout_alphas(spec, rng):
    if spec.alphas is not None:
        return np.asarray(spec.alphas, dtype=float)
    n = spec.n_firms
    n_neg = int(round(spec.frac_negative * n))
    n_pos = int(round(spec.frac_positive * n))
    alphas = np.zeros(n)
    order = rng.permutation(n)
    alphas[order[:n_neg]] = -spec.alpha_magnitude
    alphas[order[n_neg:n_neg + n_pos]] = spec.alpha_magnitude
    return alphas


def simulate_panel(spec: SimSpec):
    """Draw (ReturnPanel, FactorPanel, EmissionsTable, Truth) for ``spec``."""
    rng = np.random.default_rng(spec.seed)
    names = FACTOR_COLUMNS[spec.model_id]
    n, T, K = spec.n_firms, spec.n_days, spec.k
    firm_ids = [f"F{i:03d}" for i in range(n)]
    calendar = business_days(spec.start, T)

    vols = np.array(spec.factor_vols if spec.factor_vols is not None
                    else [DEFAULT_FACTOR_VOLS[c] for c in names])
    F = rng.standard_normal((T, K)) * vols
    betas = np.column_stack([
        rng.normal(1.0, 0.2, n) if c == "mkt_rf" else rng.normal(0.0, 0.3, n) for c in names
    ])
    alphas = _layout_alphas(spec, rng)

    load = np.sqrt(abs(spec.rho_x))
    sign = np.ones(n) if spec.rho_x >= 0 else np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    common = rng.standard_normal(T)
    idio = rng.standard_normal((T, n))
    eps = spec.residual_vol * (load * sign[None, :] * common[:, None]
                               + np.sqrt(1.0 - abs(spec.rho_x)) * idio)
    R = alphas[None, :] + F @ betas.T + eps
    if spec.missing_frac > 0:
        R[rng.random(R.shape) < spec.missing_frac] = np.nan

    log_int = np.log(spec.intensity_median) + spec.intensity_dispersion * rng.standard_normal(n)
    records = []
    first_year = int(str(calendar[0])[:4]) - 2
    last_year = int(str(calendar[-1])[:4])
    for i, f in enumerate(firm_ids):
        revenue = float(np.exp(rng.normal(8.0, 1.0)))
        for fy in range(first_year, last_year + 1):
            intensity = float(np.exp(log_int[i] + 0.05 * rng.standard_normal()))
            total = intensity * revenue
            shares = rng.dirichlet([2.0, 1.0, 4.0])
            records.append(EmissionsRecord(
                firm_id=f, fiscal_year=fy,
                scope1=float(total * shares[0]), scope2=float(total * shares[1]),
                scope3=float(total * shares[2]), revenue=revenue,
                release_date=np.datetime64(f"{fy + 1}-04-15", "D"),
            ))
    table = EmissionsTable(records)
    truth = Truth(firm_ids, alphas.tolist(), betas.tolist(),
                  {f: float(np.exp(log_int[i])) for i, f in enumerate(firm_ids)})
    return (ReturnPanel(calendar, tuple(firm_ids), R),
            FactorPanel(calendar, spec.model_id, F, names),
            table, truth)


def brute_force_triple(truth: Truth, firm, peers=None) -> RatioTriple:
    """Exact (equal, better-peer, worse-peer) shares from the planted alphas."""
    worse, equal, better = truth.dominance_counts(firm, peers)
    n = worse + equal + better
    return RatioTriple(equal / n, better / n, worse / n, float("nan"), n)


def oracle_group_ratios(truth: Truth, firms):
    """Group-mean oracle triple for a peer set."""
    firms = list(firms)
    arr = np.array([brute_force_triple(truth, f, firms).as_tuple() for f in firms])
    return tuple(arr.mean(axis=0))


def spec_to_dict(spec: SimSpec) -> dict:
    return asdict(spec)
