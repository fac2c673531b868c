"""Loading and validation of returns, factors and emissions; peer-group formation.

All three inputs are plain CSV files (UTF-8, header row):

* ``returns.csv``: ``date,firm_id,ret`` with ``ret`` a decimal simple return.
* ``factors_carhart4.csv``: ``date,mkt_rf,smb,hml,mom``;
  ``factors_ff5.csv``: ``date,mkt_rf,smb,hml,rmw,cma``.
* ``emissions.csv``: ``firm_id,fiscal_year,scope1,scope2,scope3,revenue_musd,release_date``.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DomainError,
    InsufficientDataError,
    ParseError,
    SchemaError,
    ValidationError,
)

FACTOR_COLUMNS = {
    "carhart4": ("mkt_rf", "smb", "hml", "mom"),
    "ff5": ("mkt_rf", "smb", "hml", "rmw", "cma"),
}

EMISSIONS_COLUMNS = (
    "firm_id",
    "fiscal_year",
    "scope1",
    "scope2",
    "scope3",
    "revenue_musd",
    "release_date",
)

MIN_GROUP_UNIVERSE = 8


# ---------------------------------------------------------------------------
# dates


def to_day(value) -> np.datetime64:
    """Coerce a date-like value to ``datetime64[D]``.

    A ``'YYYY-MM'`` string or a ``datetime64[M]`` is read as a formation month
    and mapped to the last calendar day of that month.
    """
    if isinstance(value, np.datetime64):
        unit = np.datetime_data(value.dtype)[0]
        if unit == "M":
            return month_end(value)
        return value.astype("datetime64[D]")
    if isinstance(value, (dt.date, dt.datetime)):
        return np.datetime64(value.isoformat()[:10], "D")
    text = str(value).strip()
    if len(text) == 7:
        return month_end(np.datetime64(text, "M"))
    return np.datetime64(text, "D")


def to_month(value) -> np.datetime64:
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[M]")
    return to_day(value).astype("datetime64[M]")


def month_end(month) -> np.datetime64:
    m = np.datetime64(month, "M")
    return (m + 1).astype("datetime64[D]") - 1


def month_range(start, end) -> np.ndarray:
    """Inclusive range of months as ``datetime64[M]``."""
    return np.arange(to_month(start), to_month(end) + 1)


def _parse_date(text, path, lineno):
    try:
        return np.datetime64(text.strip(), "D")
    except ValueError:
        raise ParseError(path, lineno, f"invalid date {text!r}") from None


def _parse_float(text, path, lineno, name):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ParseError(path, lineno, f"invalid {name} {text!r}") from None


# ---------------------------------------------------------------------------
# panels


@dataclass(frozen=True)
class ReturnPanel:
    """Daily simple returns on a trading calendar; ``NaN`` marks a missing cell."""

    calendar: np.ndarray
    firm_ids: tuple
    returns: np.ndarray

    def __post_init__(self):
        cal = np.asarray(self.calendar, dtype="datetime64[D]")
        ret = np.asarray(self.returns, dtype=float)
        if ret.shape != (cal.size, len(self.firm_ids)):
            raise ValidationError(
                f"returns shape {ret.shape} does not match "
                f"{cal.size} days x {len(self.firm_ids)} firms"
            )
        if cal.size > 1 and not np.all(np.diff(cal) > np.timedelta64(0, "D")):
            raise ValidationError("calendar must be strictly increasing")
        if len(set(self.firm_ids)) != len(self.firm_ids):
            raise ValidationError("duplicate firm identifiers")
        present = ~np.isnan(ret)
        if np.any(np.isinf(ret)):
            raise ValidationError("returns must be finite where present")
        if np.any(ret[present] <= -1.0):
            raise ValidationError("returns must exceed -1")
        cal.setflags(write=False)
        ret.setflags(write=False)
        object.__setattr__(self, "calendar", cal)
        object.__setattr__(self, "returns", ret)
        object.__setattr__(self, "firm_ids", tuple(self.firm_ids))

    @property
    def mask(self) -> np.ndarray:
        """True where a return is observed."""
        return ~np.isnan(self.returns)

    @property
    def shape(self):
        return self.returns.shape

    def column(self, firm_id) -> np.ndarray:
        return self.returns[:, self.firm_ids.index(firm_id)]


@dataclass(frozen=True)
class FactorPanel:
    calendar: np.ndarray
    model_id: str
    factors: np.ndarray
    names: tuple = field(default=())

    def __post_init__(self):
        if self.model_id not in FACTOR_COLUMNS:
            raise ValidationError(
                f"model_id must be one of {sorted(FACTOR_COLUMNS)}, got {self.model_id!r}"
            )
        names = tuple(self.names) or FACTOR_COLUMNS[self.model_id]
        cal = np.asarray(self.calendar, dtype="datetime64[D]")
        fac = np.asarray(self.factors, dtype=float)
        if fac.shape != (cal.size, len(FACTOR_COLUMNS[self.model_id])):
            raise ValidationError(
                f"{self.model_id} needs {len(FACTOR_COLUMNS[self.model_id])} factors, "
                f"matrix has shape {fac.shape}"
            )
        if not np.all(np.isfinite(fac)):
            raise ValidationError("factor values must be finite")
        if cal.size > 1 and not np.all(np.diff(cal) > np.timedelta64(0, "D")):
            raise ValidationError("calendar must be strictly increasing")
        cal.setflags(write=False)
        fac.setflags(write=False)
        object.__setattr__(self, "calendar", cal)
        object.__setattr__(self, "factors", fac)
        object.__setattr__(self, "names", names)

    @property
    def k(self) -> int:
        return self.factors.shape[1]

    def align(self, calendar) -> np.ndarray:
        """Factor rows for the given dates; raises if any date is absent."""
        calendar = np.asarray(calendar, dtype="datetime64[D]")
        idx = np.searchsorted(self.calendar, calendar)
        ok = (idx < self.calendar.size) & (
            self.calendar[np.minimum(idx, self.calendar.size - 1)] == calendar
        )
        if not np.all(ok):
            missing = calendar[~ok]
            raise ValidationError(
                f"factor data missing for {missing.size} dates, first {missing[0]}"
            )
        return self.factors[idx]


def _read_rows(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        rows = [(reader.line_num, row) for row in reader if row]
    return path, header, rows


def load_return_panel(path) -> ReturnPanel:
    """Read a long-format ``date,firm_id,ret`` file into a union-calendar panel."""
    path, header, rows = _read_rows(path)
    for col in ("date", "firm_id", "ret"):
        if col not in header:
            raise SchemaError(col, path)
    i_date, i_firm, i_ret = (header.index(c) for c in ("date", "firm_id", "ret"))
    width = len(header)

    cells = {}
    for lineno, row in rows:
        if len(row) != width:
            raise ParseError(path, lineno, f"expected {width} fields, got {len(row)}")
        day = _parse_date(row[i_date], path, lineno)
        firm = row[i_firm].strip()
        if not firm:
            raise ParseError(path, lineno, "empty firm_id")
        ret = _parse_float(row[i_ret], path, lineno, "ret")
        if not math.isfinite(ret):
            raise ValidationError(f"{path}:{lineno}: non-finite return")
        if ret <= -1.0:
            raise ValidationError(f"{path}:{lineno}: return {ret} is not > -1")
        key = (day, firm)
        if key in cells:
            raise ValidationError(f"{path}:{lineno}: duplicate row for date {day}, firm {firm}")
        cells[key] = ret

    calendar = np.unique(np.array([k[0] for k in cells], dtype="datetime64[D]"))
    firm_ids = tuple(sorted({k[1] for k in cells}))
    day_pos = {d: i for i, d in enumerate(calendar.tolist())}
    firm_pos = {f: j for j, f in enumerate(firm_ids)}
    returns = np.full((calendar.size, len(firm_ids)), np.nan)
    for (day, firm), ret in cells.items():
        returns[day_pos[day.tolist()], firm_pos[firm]] = ret
    return ReturnPanel(calendar, firm_ids, returns)


def write_return_panel(panel: ReturnPanel, path) -> None:
    """Write a panel in the long ``returns.csv`` layout (missing cells omitted)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "firm_id", "ret"])
        dates = panel.calendar.astype(str)
        for t, day in enumerate(dates):
            for j, firm in enumerate(panel.firm_ids):
                r = panel.returns[t, j]
                if not np.isnan(r):
                    w.writerow([day, firm, repr(float(r))])


def load_factor_panel(path, model_id: str) -> FactorPanel:
    if model_id not in FACTOR_COLUMNS:
        raise ValidationError(f"unknown factor model {model_id!r}")
    path, header, rows = _read_rows(path)
    if "date" not in header:
        raise SchemaError("date", path)
    for col in FACTOR_COLUMNS[model_id]:
        if col not in header:
            raise SchemaError(col, path)
    idx = [header.index(c) for c in FACTOR_COLUMNS[model_id]]
    i_date = header.index("date")
    days, values = [], []
    for lineno, row in rows:
        if len(row) != len(header):
            raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
        days.append(_parse_date(row[i_date], path, lineno))
        values.append([_parse_float(row[i], path, lineno, header[i]) for i in idx])
    cal = np.array(days, dtype="datetime64[D]")
    fac = np.array(values, dtype=float).reshape(len(days), len(idx))
    order = np.argsort(cal, kind="stable")
    cal, fac = cal[order], fac[order]
    if cal.size > 1 and np.any(np.diff(cal) == np.timedelta64(0, "D")):
        raise ValidationError(f"{path}: duplicate dates in factor file")
    return FactorPanel(cal, model_id, fac)


def write_factor_panel(panel: FactorPanel, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.names])
        for day, row in zip(panel.calendar.astype(str), panel.factors):
            w.writerow([day, *(repr(float(v)) for v in row)])


# ---------------------------------------------------------------------------
# emissions


@dataclass(frozen=True)
class EmissionsRecord:
    firm_id: str
    fiscal_year: int
    scope1: float
    scope2: float
    scope3: float
    revenue: float
    release_date: np.datetime64

    def __post_init__(self):
        object.__setattr__(self, "release_date", to_day(self.release_date))
        if min(self.scope1, self.scope2, self.scope3) < 0:
            raise ValidationError(f"{self.firm_id}/{self.fiscal_year}: negative scope emissions")
        if not self.revenue > 0:
            raise ValidationError(f"{self.firm_id}/{self.fiscal_year}: revenue must be positive")
        fy_end = np.datetime64(f"{self.fiscal_year:04d}-12-31", "D")
        if self.release_date < fy_end:
            raise ValidationError(
                f"{self.firm_id}/{self.fiscal_year}: release {self.release_date} "
                "precedes fiscal year end"
            )

    @property
    def intensity(self) -> float:
        return ghg_intensity(self)


def ghg_intensity(rec) -> float:
    """Total scope 1+2+3 emissions (t CO2e) per million USD of revenue."""
    if not rec.revenue > 0:
        raise DomainError(f"revenue must be positive, got {rec.revenue}")
    return (rec.scope1 + rec.scope2 + rec.scope3) / rec.revenue


class EmissionsTable:
    """Emissions records indexed by firm, sorted by (release_date, fiscal_year)."""

    def __init__(self, records):
        by_firm = {}
        seen = set()
        for rec in records:
            key = (rec.firm_id, rec.fiscal_year)
            if key in seen:
                raise ValidationError(f"duplicate emissions record {key}")
            seen.add(key)
            by_firm.setdefault(rec.firm_id, []).append(rec)
        for recs in by_firm.values():
            recs.sort(key=lambda r: (r.release_date, r.fiscal_year))
        self._by_firm = by_firm

    @property
    def firm_ids(self):
        return sorted(self._by_firm)

    def records(self, firm_id=None):
        if firm_id is not None:
            return list(self._by_firm.get(firm_id, ()))
        return [r for f in sorted(self._by_firm) for r in self._by_firm[f]]

    def __len__(self):
        return sum(len(v) for v in self._by_firm.values())

    def latest_record(self, firm_id, as_of):
        as_of = to_day(as_of)
        best = None
        for rec in self._by_firm.get(firm_id, ()):
            if rec.release_date <= as_of:
                best = rec  # sorted, so the last hit wins ties on fiscal_year
        if best is not None:
            assert best.release_date <= as_of, "future-dated emissions record selected"
        return best


def latest_intensity(table: EmissionsTable, firm_id, as_of):
    """Intensity from the most recent release on or before ``as_of`` (None if none)."""
    rec = table.latest_record(firm_id, as_of)
    return None if rec is None else ghg_intensity(rec)


def load_emissions(path) -> EmissionsTable:
    path, header, rows = _read_rows(path)
    for col in EMISSIONS_COLUMNS:
        if col not in header:
            raise SchemaError(col, path)
    pos = {c: header.index(c) for c in EMISSIONS_COLUMNS}
    records = []
    for lineno, row in rows:
        if len(row) != len(header):
            raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
        try:
            fy = int(row[pos["fiscal_year"]])
        except ValueError:
            raise ParseError(path, lineno, f"invalid fiscal_year {row[pos['fiscal_year']]!r}") from None
        vals = {
            c: _parse_float(row[pos[c]], path, lineno, c)
            for c in ("scope1", "scope2", "scope3", "revenue_musd")
        }
        if not all(math.isfinite(v) for v in vals.values()):
            raise ValidationError(f"{path}:{lineno}: non-finite emissions field")
        try:
            rec = EmissionsRecord(
                firm_id=row[pos["firm_id"]].strip(),
                fiscal_year=fy,
                scope1=vals["scope1"],
                scope2=vals["scope2"],
                scope3=vals["scope3"],
                revenue=vals["revenue_musd"],
                release_date=_parse_date(row[pos["release_date"]], path, lineno),
            )
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
        records.append(rec)
    return EmissionsTable(records)


def write_emissions(table: EmissionsTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EMISSIONS_COLUMNS)
        for r in table.records():
            w.writerow([
                r.firm_id, r.fiscal_year, repr(float(r.scope1)), repr(float(r.scope2)),
                repr(float(r.scope3)), repr(float(r.revenue)), str(r.release_date),
            ])


# ---------------------------------------------------------------------------
# peer groups


@dataclass(frozen=True)
class GroupAssignment:
    as_of: np.datetime64
    green: tuple
    brown: tuple
    neutral: tuple
    q_lo: float
    q_hi: float
    intensities: dict = field(default_factory=dict, compare=False, repr=False)

    def members(self, group: str) -> tuple:
        return getattr(self, group)


def form_peer_groups(table, universe, as_of, q_lo=0.25, q_hi=0.75) -> GroupAssignment:
    """Split firms with a released intensity into green / neutral / brown.

    Firms are ordered by (intensity, firm_id); the ``m`` lowest are green and the
    ``m`` highest brown, with ``m = floor(n * q_lo)`` (or the upper-tail count
    ``floor(n * (1 - q_hi))`` if that is smaller) so both tails have equal size.
    """
    if not 0 < q_lo < q_hi < 1:
        raise DomainError(f"need 0 < q_lo < q_hi < 1, got {q_lo}, {q_hi}")
    as_of = to_day(as_of)
    eligible = []
    for firm in sorted(universe):
        x = latest_intensity(table, firm, as_of)
        if x is not None:
            eligible.append((x, firm))
    n = len(eligible)
    if n < MIN_GROUP_UNIVERSE:
        raise InsufficientDataError(
            f"only {n} firms with released emissions at {as_of}; need {MIN_GROUP_UNIVERSE}"
        )
    eligible.sort()
    m = min(math.floor(n * q_lo + 1e-9), math.floor(n * (1.0 - q_hi) + 1e-9))
    firms = [f for _, f in eligible]
    return GroupAssignment(
        as_of=as_of,
        green=tuple(firms[:m]),
        brown=tuple(firms[n - m:]),
        neutral=tuple(firms[m:n - m]),
        q_lo=q_lo,
        q_hi=q_hi,
        intensities={f: x for x, f in eligible},
    )
