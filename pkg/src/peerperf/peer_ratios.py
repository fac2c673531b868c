"""Per-stock equal/under/outperformance ratios from pairwise p-values.

The equal-performance share is a Storey-type null-proportion estimate with the
cutoff chosen by bootstrap MSE.  What is left over is split between under- and
outperformance according to false-discovery-adjusted counts of significant
pairs in each direction.

Sign convention: ``sign = +1`` means stock i has the larger alpha, so the peer
counts toward ``pi_plus`` (peers that stock i outperforms); ``pi_minus`` is the
share of peers that outperform stock i.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import EmptyGroupError, InsufficientDataError

DEFAULT_LAMBDA_GRID = tuple(np.round(np.arange(0.30, 0.7001, 0.05), 2))
DEFAULT_GAMMA = 0.10
DEFAULT_N_BOOT = 500
MIN_PEERS = 10
FALLBACK_LAMBDA = 0.5


@dataclass(frozen=True)
class PairEvidence:
    p_values: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_values, dtype=float)
        s = np.asarray(self.signs, dtype=int)
        if p.shape != s.shape or p.ndim != 1:
            raise ValueError("p_values and signs must be 1-d and of equal length")
        if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
            raise ValueError("p-values must lie in [0, 1]")
        if not np.all(np.isin(s, (-1, 0, 1))):
            raise ValueError("signs must be -1, 0 or +1")
        object.__setattr__(self, "p_values", p)
        object.__setattr__(self, "signs", s)

    @property
    def n(self) -> int:
        return self.p_values.size

    def flipped(self) -> "PairEvidence":
        return PairEvidence(self.p_values, -self.signs)


@dataclass(frozen=True)
class RatioTriple:
    pi0: float
    pi_minus: float
    pi_plus: float
    lambda_star: float
    n: int

    def as_tuple(self):
        return (self.pi0, self.pi_minus, self.pi_plus)


@dataclass(frozen=True)
class AggregateRatios:
    pi0: float
    pi_minus: float
    pi_plus: float
    n_firms: int
    month: object = None
    horizon: int | None = None

    @property
    def heterogeneity(self) -> float:
        return 1.0 - self.pi0


def stable_seed(*key) -> int:
    """Deterministic 64-bit seed from an arbitrary tuple of str()-able parts."""
    digest = hashlib.sha256("\x1f".join(map(str, key)).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _pi0_curve(p, grid):
    n = p.shape[-1]
    counts = (p[..., None] > grid).sum(axis=-2)
    return counts / ((1.0 - grid) * n)


def storey_pi0(p_values, lambda_grid=DEFAULT_LAMBDA_GRID, *, n_boot=DEFAULT_N_BOOT,
               rng=None):
    """Null-proportion estimate with bootstrap-MSE cutoff selection.

    Returns ``(pi0, lambda_star)``; ``pi0`` is clamped to [0, 1].  When the
    bootstrap MSE does not discriminate between cutoffs (spread below 1e-12)
    the cutoff falls back to 0.5.
    """
    # sorted so that the bootstrap draw, and hence the estimate, ignores input order
    p = np.sort(np.asarray(p_values, dtype=float))
    n = p.size
    if n < MIN_PEERS:
        raise InsufficientDataError(f"{n} p-values, need at least {MIN_PEERS}")
    grid = np.asarray(lambda_grid, dtype=float)
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    curve = _pi0_curve(p, grid)
    target = curve.min()
    boot = _pi0_curve(p[rng.integers(0, n, size=(n_boot, n))], grid)
    mse = np.mean((boot - target) ** 2, axis=0)
    if mse.max() - mse.min() <= 1e-12:
        lam = FALLBACK_LAMBDA
        pi0 = np.count_nonzero(p > lam) / ((1.0 - lam) * n)
    else:
        best = int(np.argmin(mse))
        lam, pi0 = float(grid[best]), float(curve[best])
    return min(max(pi0, 0.0), 1.0), lam


def split_ratios(evidence: PairEvidence, pi0, gamma=DEFAULT_GAMMA):
    """Allocate ``1 - pi0`` to (pi_minus, pi_plus) from directional discoveries."""
    if not 0.0 <= pi0 <= 1.0:
        raise ValueError(f"pi0 must lie in [0, 1], got {pi0}")
    p, s, n = evidence.p_values, evidence.signs, evidence.n
    rest = 1.0 - pi0
    if rest == 0.0:
        return 0.0, 0.0
    sig = p <= gamma
    haircut = pi0 * gamma / 2.0
    a_plus = max(0.0, np.count_nonzero(sig & (s > 0)) / n - haircut)
    a_minus = max(0.0, np.count_nonzero(sig & (s < 0)) / n - haircut)
    total = a_plus + a_minus
    if total == 0.0:
        pi_plus = rest / 2.0
    else:
        pi_plus = rest * (a_plus / total)
    pi_minus = rest - pi_plus
    return pi_minus, pi_plus


def stock_ratio_triple(evidence: PairEvidence, *, lambda_grid=DEFAULT_LAMBDA_GRID,
                       gamma=DEFAULT_GAMMA, n_boot=DEFAULT_N_BOOT, rng=None) -> RatioTriple:
    """Equal/under/outperformance triple for one stock against its peers."""
    pi0, lam = storey_pi0(evidence.p_values, lambda_grid, n_boot=n_boot, rng=rng)
    pi_minus, pi_plus = split_ratios(evidence, pi0, gamma)
    return RatioTriple(pi0, pi_minus, pi_plus, lam, evidence.n)


def evidence_from_tests(tests, firm) -> PairEvidence:
    """Collect a stock's evidence from :class:`PairTest` objects in either orientation."""
    p, s = [], []
    for t in tests:
        if t.firm_i == firm:
            sign = t.sign
        elif t.firm_j == firm:
            sign = -t.sign
        else:
            continue
        p.append(t.p_value)
        s.append(sign)
    return PairEvidence(np.array(p), np.array(s, dtype=int))


def aggregate_ratios(triples, month=None, horizon=None) -> AggregateRatios:
    triples = list(triples)
    if not triples:
        raise EmptyGroupError("cannot aggregate an empty peer group")
    arr = np.array([t.as_tuple() for t in triples], dtype=float)
    pi0, pi_minus, pi_plus = arr.mean(axis=0)
    return AggregateRatios(float(pi0), float(pi_minus), float(pi_plus), len(triples),
                           month, horizon)
