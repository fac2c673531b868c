"""OLS, kernel HAC covariance estimation and pairwise alpha-differential tests.

The long-run variance estimator is the quadratic-spectral (QS) kernel estimator
with Andrews's AR(1) plug-in bandwidth and, optionally, VAR(1) prewhitening in
the manner of Andrews and Monahan.  Every HAC routine works on a batch of score
series at once, shape ``(batch, T, d)``, so the peer-group loop can studentize
hundreds of pairs with a handful of FFTs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import ndtr

from .errors import InsufficientDataError, SingularDesignError

MIN_PAIR_OBS = 60
MIN_HAC_OBS = 20
MAX_AR_COEF = 0.97
QS_BANDWIDTH_CONSTANT = 1.3221

# metadata describing the inference conventions
HAC_METADATA = {
    "kernel": "quadratic_spectral",
    "bandwidth": "andrews_ar1_plugin",
    "bandwidth_weights": "equal",
    "prewhitening": "var1",
    "reference_distribution": "normal",
}


@dataclass(frozen=True)
class OlsFit:
    coef: np.ndarray
    resid: np.ndarray
    xtx_inv: np.ndarray
    nobs: int
    k: int

    @property
    def intercept(self) -> float:
        return float(self.coef[0])


@dataclass(frozen=True)
class PairTest:
    firm_i: object
    firm_j: object
    delta_alpha: float
    hac_se: float
    t_stat: float
    p_value: float
    nobs: int
    degenerate: bool = False

    @property
    def sign(self) -> int:
        return int(np.sign(self.delta_alpha))


def _qr_solve(X, Y, rcond=None):
    """Least squares through a column-pivoted QR; returns coef, resid, (X'X)^-1."""
    T, p = X.shape
    q, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if rcond is None:
        rcond = max(T, p) * np.finfo(float).eps
    if diag.size == 0 or diag[0] == 0 or diag[-1] <= rcond * diag[0]:
        raise SingularDesignError(f"design matrix of shape {X.shape} is rank deficient")
    qty = q.T @ Y
    coef_p = scipy.linalg.solve_triangular(r, qty)
    coef = np.empty_like(coef_p)
    coef[piv] = coef_p
    resid = Y - X @ coef
    r_inv = scipy.linalg.solve_triangular(r, np.eye(p))
    xtx_inv_p = r_inv @ r_inv.T
    xtx_inv = np.empty_like(xtx_inv_p)
    xtx_inv[np.ix_(piv, piv)] = xtx_inv_p
    return coef, resid, xtx_inv


def ols_fit(y, X, *, min_obs=MIN_PAIR_OBS) -> OlsFit:
    """Least-squares fit of ``y`` on ``X`` (``X`` carries its own intercept column).

    Uses a pivoted QR decomposition; a rank-deficient design raises
    :class:`SingularDesignError`.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X shape {X.shape} incompatible with y length {y.shape[0]}")
    T, p = X.shape
    if T < min_obs:
        raise InsufficientDataError(f"{T} observations, need at least {min_obs}")
    if T <= p:
        raise InsufficientDataError(f"{T} observations for {p} regressors")
    coef, resid, xtx_inv = _qr_solve(X, y)
    return OlsFit(coef=coef, resid=resid, xtx_inv=xtx_inv, nobs=T, k=p - 1)


# ---------------------------------------------------------------------------
# HAC


def qs_kernel(x):
    """Quadratic-spectral kernel, k(0) = 1."""
    x = np.abs(np.asarray(x, dtype=float))
    z = 6.0 * np.pi * x / 5.0
    out = np.ones_like(z)
    big = z >= 1e-3
    zb = z[big]
    out[big] = 3.0 / zb**2 * (np.sin(zb) / zb - np.cos(zb))
    small = (~big) & (z > 0)
    zs = z[small] ** 2
    out[small] = 1.0 - zs / 10.0 + zs**2 / 280.0
    return out


def _ar1_coef(e):
    """Per-column AR(1) coefficient without intercept; e has shape (B, T, d)."""
    num = np.sum(e[:, 1:] * e[:, :-1], axis=1)
    den = np.sum(e[:, :-1] ** 2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(rho, -MAX_AR_COEF, MAX_AR_COEF)


def andrews_bandwidth(e, weights=None):
    """Andrews's automatic QS bandwidth from univariate AR(1) fits, one per batch row."""
    e = _as_batch(e)
    B, n, d = e.shape
    rho = _ar1_coef(e)
    innov = e[:, 1:] - rho[:, None, :] * e[:, :-1]
    sig2 = np.sum(innov**2, axis=1) / max(n - 1, 1)
    w = np.ones(d) if weights is None else np.asarray(weights, dtype=float)
    num = np.sum(w * 4.0 * rho**2 * sig2**2 / (1.0 - rho) ** 8, axis=1)
    den = np.sum(w * sig2**2 / (1.0 - rho) ** 4, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha2 = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return QS_BANDWIDTH_CONSTANT * (alpha2 * n) ** 0.2


def _as_batch(g):
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        return g[None, :, None]
    if g.ndim == 2:
        return g[None]
    return g


def _qs_spectral_sum(e, bw):
    """Sum over all lags of k(j/bw) * Gamma_j, via FFT; e has shape (B, n, d)."""
    B, n, d = e.shape
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    lags = np.arange(1, n)
    w = np.zeros((B, nfft))
    w[:, 0] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        x = lags[None, :] / bw[:, None]
    kw = np.where(bw[:, None] > 0, qs_kernel(np.where(np.isfinite(x), x, 0.0)), 0.0)
    w[:, 1:n] = kw
    w[:, nfft - n + 1:] = kw[:, ::-1]
    W = np.fft.rfft(w, axis=1).real
    W[:, 1:-1] *= 2.0
    F = np.fft.rfft(e, n=nfft, axis=1)
    S = (np.swapaxes(F * W[:, :, None], 1, 2) @ F.conj()).real
    S /= n * nfft
    return 0.5 * (S + np.swapaxes(S, 1, 2))


def _var1_coef(g):
    """VAR(1) coefficient matrices without intercept, singular values capped."""
    B, T, d = g.shape
    lagged = np.swapaxes(g[:, :-1], 1, 2)
    c0 = lagged @ g[:, :-1]
    c1 = np.swapaxes(g[:, 1:], 1, 2) @ g[:, :-1]
    A = np.zeros((B, d, d))
    scale = np.trace(c0, axis1=1, axis2=2)
    live = scale > 0
    if d == 1:
        A[live] = c1[live] / c0[live]
    elif live.any():
        ok = live.copy()
        try:
            A[live] = np.swapaxes(np.linalg.solve(c0[live], np.swapaxes(c1[live], 1, 2)), 1, 2)
        except np.linalg.LinAlgError:
            for b in np.flatnonzero(live):
                A[b] = c1[b] @ np.linalg.pinv(c0[b], hermitian=True)
        ok &= np.all(np.isfinite(A), axis=(1, 2))
        for b in np.flatnonzero(live & ~ok):
            A[b] = c1[b] @ np.linalg.pinv(c0[b], hermitian=True)
    u, s, vt = np.linalg.svd(A)
    over = np.any(s > MAX_AR_COEF, axis=1)
    if over.any():
        A[over] = u[over] @ (np.minimum(s[over], MAX_AR_COEF)[..., None] * vt[over])
    return A


def hac_lrv_matrix(g, prewhiten=True, bandwidth=None):
    """QS-kernel long-run covariance of mean-zero score series.

    ``g`` has shape ``(T,)``, ``(T, d)`` or ``(B, T, d)``; returns ``(B, d, d)``.
    Autocovariances are normalized by the number of (whitened) observations.
    """
    g = _as_batch(g)
    B, T, d = g.shape
    if T < MIN_HAC_OBS:
        raise InsufficientDataError(f"HAC needs at least {MIN_HAC_OBS} observations, got {T}")
    if prewhiten:
        A = _var1_coef(g)
        e = g[:, 1:] - g[:, :-1] @ np.swapaxes(A, 1, 2)
    else:
        e = g
    bw = andrews_bandwidth(e) if bandwidth is None else np.broadcast_to(
        np.asarray(bandwidth, dtype=float), (B,)).copy()
    S = _qs_spectral_sum(e, bw)
    if prewhiten:
        M = np.linalg.inv(np.eye(d)[None] - A)
        S = M @ S @ np.swapaxes(M, 1, 2)
    return S


def hac_lrv(v, prewhiten=True) -> float:
    """Long-run variance of a demeaned scalar series (QS kernel, AR(1) prewhitening)."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size < MIN_HAC_OBS:
        raise InsufficientDataError(f"HAC needs at least {MIN_HAC_OBS} observations, got {v.size}")
    if not np.any(v):
        return 0.0
    return max(0.0, float(hac_lrv_matrix(v, prewhiten=prewhiten)[0, 0, 0]))


def sandwich_cov(X, resid, prewhiten=True, adjust=True):
    """HAC covariance of OLS coefficients for one or many residual columns.

    ``resid`` is ``(T,)`` or ``(T, B)``; returns ``(d, d)`` or ``(B, d, d)``.
    With ``adjust`` the meat is scaled by T / (T - d).
    """
    X = np.asarray(X, dtype=float)
    resid = np.asarray(resid, dtype=float)
    single = resid.ndim == 1
    E = resid[:, None] if single else resid
    T, d = X.shape
    scores = X[None, :, :] * E.T[:, :, None]
    S = hac_lrv_matrix(scores, prewhiten=prewhiten)
    _, _, xtx_inv = _qr_solve(X, np.zeros(T))
    meat = T * S
    if adjust:
        meat *= T / (T - d)
    V = xtx_inv[None] @ meat @ xtx_inv[None]
    return V[0] if single else V


def pvalue_from_t(t):
    """Two-sided normal p-value, 2 * (1 - Phi(|t|)); NaN-free for infinite t."""
    t = np.asarray(t, dtype=float)
    p = 2.0 * ndtr(-np.abs(t))
    p = np.minimum(p, 1.0)
    return float(p) if p.ndim == 0 else p


# ---------------------------------------------------------------------------
# pairwise tests


def _design(F):
    F = np.asarray(F, dtype=float)
    return np.column_stack([np.ones(F.shape[0]), F])


def _studentize(delta, var, resid_norm, y_norm):
    """Shared convention for t/p including the zero-residual degenerate case."""
    degenerate = resid_norm <= 1e-12 * y_norm
    se = np.sqrt(np.maximum(var, 0.0))
    se = np.where(degenerate, 0.0, se)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, delta / np.where(se > 0, se, 1.0), 0.0)
    p = pvalue_from_t(t)
    # zero residual variance: p is 1 when the alpha differential is exactly zero, else 0
    t = np.where(degenerate, np.where(delta == 0, 0.0, np.copysign(np.inf, delta)), t)
    p = np.where(degenerate, np.where(delta == 0, 1.0, 0.0), p)
    p = np.where((~degenerate) & (se == 0), np.where(delta == 0, 1.0, 0.0), p)
    return se, t, p, degenerate


def pairwise_alpha_test(r_i, r_j, factors, window=None, *, min_obs=MIN_PAIR_OBS,
                        firm_i=None, firm_j=None, prewhiten=True) -> PairTest:
    """Test equal alpha for two return series against a factor model.

    ``factors`` is a :class:`FactorPanel` or a ``(T, K)`` array aligned with the
    return series.  ``window`` optionally selects rows (slice or boolean mask).
    Days where either return is missing are dropped.
    """
    F = getattr(factors, "factors", factors)
    r_i = np.asarray(r_i, dtype=float)
    r_j = np.asarray(r_j, dtype=float)
    F = np.asarray(F, dtype=float)
    if window is not None:
        r_i, r_j, F = r_i[window], r_j[window], F[window]
    ok = ~(np.isnan(r_i) | np.isnan(r_j))
    n = int(ok.sum())
    if n < min_obs:
        raise InsufficientDataError(f"pairwise overlap of {n} days, need at least {min_obs}")
    y = r_i[ok] - r_j[ok]
    X = _design(F[ok])
    fit = ols_fit(y, X, min_obs=min_obs)
    V = sandwich_cov(X, fit.resid, prewhiten=prewhiten)
    se, t, p, degen = _studentize(
        fit.coef[0], V[0, 0], np.linalg.norm(fit.resid), np.linalg.norm(y))
    return PairTest(firm_i, firm_j, float(fit.coef[0]), float(se), float(t),
                    float(p), n, bool(degen))


@dataclass(frozen=True)
class PairBatch:
    """Vectorized results for a list of (i, j) column pairs."""

    pairs: np.ndarray
    delta_alpha: np.ndarray
    hac_se: np.ndarray
    t_stat: np.ndarray
    p_value: np.ndarray
    nobs: np.ndarray
    valid: np.ndarray
    degenerate: np.ndarray
    influence: np.ndarray | None = None


def _stacked_fit(X, Y):
    """OLS of each row of ``Y`` (B, n) on its own design ``X`` (B, n, d) via stacked QR.

    Returns ``(coef, resid, xtx_inv, full_rank)``.
    """
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diagonal(r, axis1=1, axis2=2))
    n, d = X.shape[1:]
    full_rank = diag.min(axis=1) > max(n, d) * np.finfo(float).eps * diag.max(axis=1)
    r = np.where(full_rank[:, None, None], r, np.eye(d))
    coef = np.linalg.solve(r, np.swapaxes(q, 1, 2) @ Y[..., None])[..., 0]
    resid = Y - (X @ coef[..., None])[..., 0]
    r_inv = np.linalg.inv(r)
    return coef, resid, r_inv @ np.swapaxes(r_inv, 1, 2), full_rank


def pairwise_alpha_tests(R, F, pairs, *, min_obs=MIN_PAIR_OBS, prewhiten=True,
                         keep_influence=False) -> PairBatch:
    """Run :func:`pairwise_alpha_test` for many column pairs of ``R``.

    Pairs whose columns are both fully observed share one QR factorization of
    the factor design.  The remaining pairs are grouped by the length of their
    pairwise-complete sample and fitted with stacked QR factorizations.  Pairs
    with fewer than ``min_obs`` common days are returned with ``valid = False``.
    """
    R = np.asarray(R, dtype=float)
    F = np.asarray(F, dtype=float)
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    P = pairs.shape[0]
    T = R.shape[0]
    delta = np.full(P, np.nan)
    se = np.full(P, np.nan)
    tst = np.full(P, np.nan)
    pv = np.full(P, np.nan)
    nobs = np.zeros(P, dtype=int)
    valid = np.zeros(P, dtype=bool)
    degen = np.zeros(P, dtype=bool)
    infl = np.zeros((P, T)) if keep_influence else None
    X = _design(F)
    d = X.shape[1]

    complete = ~np.isnan(R).any(axis=0)
    full = complete[pairs[:, 0]] & complete[pairs[:, 1]] if P else np.zeros(0, bool)
    if np.any(full) and T >= min_obs:
        idx = np.flatnonzero(full)
        Y = R[:, pairs[idx, 0]] - R[:, pairs[idx, 1]]
        coef, resid, xtx_inv = _qr_solve(X, Y)
        scores = X[None, :, :] * resid.T[:, :, None]
        S = hac_lrv_matrix(scores, prewhiten=prewhiten)
        a = xtx_inv[0]
        var = T * (T / (T - d)) * np.einsum("i,bij,j->b", a, S, a)
        s, t, p, dg = _studentize(coef[0], var, np.linalg.norm(resid, axis=0),
                                  np.linalg.norm(Y, axis=0))
        delta[idx], se[idx], tst[idx], pv[idx], degen[idx] = coef[0], s, t, p, dg
        nobs[idx] = T
        valid[idx] = True
        if keep_influence:
            infl[idx] = (X @ a)[None, :] * resid.T

    rest = np.flatnonzero(~full)
    if rest.size:
        ok = ~(np.isnan(R[:, pairs[rest, 0]]) | np.isnan(R[:, pairs[rest, 1]]))
        nobs[rest] = ok.sum(axis=0)
    usable = rest[nobs[rest] >= max(min_obs, d + 1)] if rest.size else rest
    for n in np.unique(nobs[usable]):
        idx = usable[nobs[usable] == n]
        ok = ~(np.isnan(R[:, pairs[idx, 0]]) | np.isnan(R[:, pairs[idx, 1]]))
        rows = np.nonzero(ok.T)[1].reshape(idx.size, n)
        Y = R[rows, pairs[idx, 0][:, None]] - R[rows, pairs[idx, 1][:, None]]
        Xb = X[rows]
        coef, resid, xtx_inv, full_rank = _stacked_fit(Xb, Y)
        if not full_rank.all():
            raise SingularDesignError("factor design is rank deficient on a pairwise sample")
        scores = Xb * resid[..., None]
        S = hac_lrv_matrix(scores, prewhiten=prewhiten)
        a = xtx_inv[:, 0]
        var = n * (n / (n - d)) * np.einsum("bi,bij,bj->b", a, S, a)
        s, t, p, dg = _studentize(coef[:, 0], var, np.linalg.norm(resid, axis=1),
                                  np.linalg.norm(Y, axis=1))
        delta[idx], se[idx], tst[idx], pv[idx], degen[idx] = coef[:, 0], s, t, p, dg
        valid[idx] = True
        if keep_influence:
            infl[idx[:, None], rows] = np.einsum("bni,bi->bn", Xb, a) * resid
    return PairBatch(pairs, delta, se, tst, pv, nobs, valid, degen, infl)
