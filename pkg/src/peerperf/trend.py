"""Time-trend inference on monthly ratio series.

Linear trends are OLS fits of the series on an intercept, months since the
first observation and an optional control series, with several choices of
autocorrelation-robust standard error.  The beta-regression trend fits a logit
mean model with constant precision by maximum likelihood.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, expit, gammaln, logit, polygamma

from .econometrics import _qr_solve, hac_lrv_matrix, ols_fit, pvalue_from_t, sandwich_cov
from .errors import (
    AlignmentError,
    DomainError,
    InsufficientDataError,
    OptimizationError,
    SingularDesignError,
)

MIN_MONTHS = 24
DEFAULT_N_BOOT = 2000
TREND_SCALE = 1000.0
ESTIMATORS = ("hac", "white", "hansen_hodrick", "stationary_bootstrap", "block_bootstrap")


@dataclass(frozen=True)
class RatioSeries:
    months: np.ndarray
    values: np.ndarray
    group: str = ""
    horizon: int | None = None
    metric: str = "heterogeneity"
    model: str = ""

    def __post_init__(self):
        months = np.asarray(self.months, dtype="datetime64[M]")
        values = np.asarray(self.values, dtype=float)
        if months.shape != values.shape:
            raise ValueError("months and values must have equal length")
        if months.size > 1 and not np.all(np.diff(months) > np.timedelta64(0, "M")):
            raise ValueError("months must be strictly increasing")
        if np.any((values < 0) | (values > 1)):
            raise ValueError("ratio values must lie in [0, 1]")
        object.__setattr__(self, "months", months)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class TrendResult:
    slope: float
    se: float
    p_value: float
    estimator: str
    controls: tuple = ()
    coef: tuple = ()
    flags: dict = field(default_factory=dict)

    @property
    def scaled_slope(self) -> float:
        return self.slope * TREND_SCALE


def significance_stars(p) -> str:
    if p is None or not np.isfinite(p):
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


def _values(y):
    return y.values if isinstance(y, RatioSeries) else np.asarray(y, dtype=float)


def trend_design(y, control=None):
    """Regressors (1, months since start, [control]) aligned to ``y``."""
    vals = _values(y)
    n = vals.size
    if isinstance(y, RatioSeries):
        t = (y.months - y.months[0]).astype(int).astype(float)
    else:
        t = np.arange(n, dtype=float)
    cols = [np.ones(n), t]
    if control is not None:
        if isinstance(control, RatioSeries) and isinstance(y, RatioSeries):
            if not np.array_equal(control.months, y.months):
                raise AlignmentError("control series months differ from the trended series")
        c = _values(control)
        if c.shape != vals.shape:
            raise AlignmentError(f"control length {c.size} differs from series length {n}")
        cols.append(c)
    return vals, np.column_stack(cols)


# ---------------------------------------------------------------------------
# standard errors


def _lag_sum(scores, weights):
    """sum_j w_j (Gamma_j + Gamma_j'), Gamma_j = sum_t s_t s_{t-j}'; w_0 counted once."""
    S = weights[0] * scores.T @ scores
    for j in range(1, len(weights)):
        G = scores[j:].T @ scores[:-j]
        S = S + weights[j] * (G + G.T)
    return S


def white_cov(X, resid):
    _, _, xtx_inv = _qr_solve(X, np.zeros(X.shape[0]))
    s = X * resid[:, None]
    return xtx_inv @ (s.T @ s) @ xtx_inv


def hansen_hodrick_cov(X, resid, lags):
    """Truncated uniform-weight covariance; Bartlett weights if a variance goes negative.

    Returns ``(cov, used_bartlett_fallback)``.
    """
    lags = int(lags)
    if lags < 0:
        raise DomainError("Hansen-Hodrick lag truncation must be >= 0")
    X = np.asarray(X, dtype=float)
    resid = np.asarray(resid, dtype=float)
    lags = min(lags, X.shape[0] - 1)
    _, _, xtx_inv = _qr_solve(X, np.zeros(X.shape[0]))
    scores = X * resid[:, None]
    V = xtx_inv @ _lag_sum(scores, np.ones(lags + 1)) @ xtx_inv
    if np.all(np.diag(V) >= 0):
        return V, False
    bartlett = 1.0 - np.arange(lags + 1) / (lags + 1)
    return xtx_inv @ _lag_sum(scores, bartlett) @ xtx_inv, True


def hansen_hodrick_se(X, resid, lags):
    """Coefficient standard errors under Hansen-Hodrick weighting; ``(se, fallback)``."""
    V, fallback = hansen_hodrick_cov(X, resid, lags)
    return np.sqrt(np.maximum(np.diag(V), 0.0)), fallback


def politis_white_block_length(x):
    """Automatic expected block lengths ``(stationary, circular)`` for series ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    e = x - x.mean()
    b_max = math.ceil(min(3.0 * math.sqrt(n), n / 3.0))
    kn = max(5, int(math.log10(n)))
    m_max = int(math.ceil(math.sqrt(n))) + kn
    m_max = min(m_max, n - 2)
    band = 2.0 * math.sqrt(math.log10(n) / n)
    acv = np.array([e[k:] @ e[:n - k] / n for k in range(m_max + 1)])
    if acv[0] <= 0:
        return 1.0, 1.0
    acf = np.abs(acv / acv[0])
    m_hat = None
    for k in range(1, m_max - kn + 2):
        if np.all(acf[k:k + kn] < band):
            m_hat = k - 1
            break
    m = m_max if m_hat is None else min(2 * max(m_hat, 1), m_max)
    lag = np.arange(1, m + 1)
    u = lag / m
    flat_top = np.where(u <= 0.5, 1.0, 2.0 * (1.0 - u))
    g = 2.0 * np.sum(flat_top * lag * acv[1:m + 1])
    lrv = acv[0] + 2.0 * np.sum(flat_top * acv[1:m + 1])
    if g == 0 or lrv <= 0:
        return 1.0, 1.0
    b_sb = (2.0 * g**2 / (2.0 * lrv**2)) ** (1 / 3) * n ** (1 / 3)
    b_cb = (2.0 * g**2 / (4.0 / 3.0 * lrv**2)) ** (1 / 3) * n ** (1 / 3)
    return float(min(max(b_sb, 1.0), b_max)), float(min(max(b_cb, 1.0), b_max))


@dataclass(frozen=True)
class BootstrapSE:
    se: np.ndarray
    block_length: float
    n_boot: int
    seed: int
    degenerate: bool = False


def _bootstrap_coefs(y, X, idx):
    Xb = X[idx]
    yb = y[idx]
    A = np.einsum("btp,btq->bpq", Xb, Xb)
    c = np.einsum("btp,bt->bp", Xb, yb)
    try:
        return np.linalg.solve(A, c[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.array([np.linalg.lstsq(Xb[b], yb[b], rcond=None)[0] for b in range(len(idx))])


def stationary_bootstrap_indices(n, mean_block, n_boot, rng):
    p = 1.0 / mean_block
    new_block = rng.random((n_boot, n)) < p
    starts = rng.integers(0, n, size=(n_boot, n))
    idx = np.empty((n_boot, n), dtype=np.int64)
    idx[:, 0] = starts[:, 0]
    for t in range(1, n):
        idx[:, t] = np.where(new_block[:, t], starts[:, t], (idx[:, t - 1] + 1) % n)
    return idx


def circular_block_indices(n, block_length, n_boot, rng):
    n_blocks = -(-n // block_length)
    starts = rng.integers(0, n, size=(n_boot, n_blocks))
    idx = (starts[:, :, None] + np.arange(block_length)) % n
    return idx.reshape(n_boot, -1)[:, :n]


def stationary_bootstrap_se(y, X, expected_block_length="auto", n_boot=DEFAULT_N_BOOT,
                            seed=0) -> BootstrapSE:
    """Coefficient SEs from the stationary bootstrap of (y, X) rows.

    With ``expected_block_length="auto"`` the mean block length is the
    Politis-White choice for the score series of the second coefficient
    (the trend slope).  A mean block length above half the sample is flagged
    as degenerate.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n = y.size
    if n < MIN_MONTHS:
        raise InsufficientDataError(f"{n} observations, need at least {MIN_MONTHS}")
    if expected_block_length == "auto":
        coef, resid, xtx_inv = _qr_solve(X, y)
        j = 1 if X.shape[1] > 1 else 0
        infl = (X @ xtx_inv[j]) * resid
        ell = politis_white_block_length(infl)[0]
    else:
        ell = float(expected_block_length)
        if not ell >= 1:
            raise DomainError("expected block length must be >= 1")
    rng = np.random.default_rng(seed)
    idx = stationary_bootstrap_indices(n, ell, n_boot, rng)
    coefs = _bootstrap_coefs(y, X, idx)
    return BootstrapSE(coefs.std(axis=0, ddof=1), ell, n_boot, seed, ell > n / 2)


def block_bootstrap_se(y, X, block_length, n_boot=DEFAULT_N_BOOT, seed=0) -> BootstrapSE:
    """Coefficient SEs from the circular fixed-length block bootstrap."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n = y.size
    if not (isinstance(block_length, (int, np.integer)) and 1 <= block_length <= n):
        raise DomainError(f"block length must be an integer in [1, {n}], got {block_length}")
    rng = np.random.default_rng(seed)
    idx = circular_block_indices(n, int(block_length), n_boot, rng)
    coefs = _bootstrap_coefs(y, X, idx)
    return BootstrapSE(coefs.std(axis=0, ddof=1), float(block_length), n_boot, seed)


# ---------------------------------------------------------------------------
# linear trend


def linear_trend(y, control=None, se="hac", *, lags=None, block_length=None,
                 n_boot=DEFAULT_N_BOOT, seed=0) -> TrendResult:
    """OLS trend of ``y`` with the chosen standard-error estimator.

    ``se`` is one of ``hac``, ``white``, ``hansen_hodrick`` (``lags`` defaults to
    ``horizon - 1`` for a :class:`RatioSeries`), ``stationary_bootstrap``
    (``block_length`` ``None`` means automatic) or ``block_bootstrap``.
    """
    if se not in ESTIMATORS:
        raise ValueError(f"unknown estimator {se!r}; choose from {ESTIMATORS}")
    vals, X = trend_design(y, control)
    if vals.size < MIN_MONTHS:
        raise InsufficientDataError(f"{vals.size} months, need at least {MIN_MONTHS}")
    fit = ols_fit(vals, X, min_obs=MIN_MONTHS)
    slope = float(fit.coef[1])
    flags = {}
    tag = se
    if se == "hac":
        var = sandwich_cov(X, fit.resid)[1, 1]
    elif se == "white":
        var = white_cov(X, fit.resid)[1, 1]
    elif se == "hansen_hodrick":
        if lags is None:
            h = getattr(y, "horizon", None)
            if h is None:
                raise ValueError("lags required for a plain array")
            lags = int(h) - 1
        V, fallback = hansen_hodrick_cov(X, fit.resid, lags)
        var = V[1, 1]
        flags = {"lags": int(lags), "bartlett_fallback": fallback}
    elif se == "stationary_bootstrap":
        bs = stationary_bootstrap_se(vals, X, "auto" if block_length is None else block_length,
                                     n_boot, seed)
        var = bs.se[1] ** 2
        flags = {"mean_block_length": bs.block_length, "n_boot": n_boot, "seed": seed,
                 "degenerate": bs.degenerate}
    else:
        if block_length is None:
            raise ValueError("block_length required for the block bootstrap")
        bs = block_bootstrap_se(vals, X, block_length, n_boot, seed)
        var = bs.se[1] ** 2
        tag = f"block_bootstrap({int(block_length)})"
        flags = {"block_length": int(block_length), "n_boot": n_boot, "seed": seed}

    resid_norm = np.linalg.norm(fit.resid)
    scale = np.max(np.abs(vals)) if vals.size else 0.0
    if resid_norm <= 1e-12 * max(np.linalg.norm(vals), 1e-300):
        # exact fit: zero slope is a certain null, anything else a certain rejection
        se_val = 0.0
        null = abs(slope) * max(vals.size, 1) <= 1e-12 * max(scale, 1e-300)
        p = 1.0 if null else 0.0
        flags = {**flags, "exact_fit": True}
    else:
        se_val = float(math.sqrt(max(var, 0.0)))
        p = pvalue_from_t(slope / se_val) if se_val > 0 else (1.0 if slope == 0 else 0.0)
    controls = ("control",) if control is not None else ()
    return TrendResult(slope, se_val, float(p), tag, controls, tuple(fit.coef.tolist()), flags)


def trend_difference(y_a, y_b):
    """Difference in linear trends (a minus b) from the stacked regression.

    Month-level scores of the two series are summed before the HAC step, so
    cross-series correlation within a month is accounted for.
    """
    va, Xa = trend_design(y_a)
    vb, Xb = trend_design(y_b)
    if va.size != vb.size:
        raise AlignmentError("series must cover the same months")
    n = va.size
    t = Xa[:, 1]
    y = np.concatenate([va, vb])
    d = np.concatenate([np.ones(n), np.zeros(n)])
    X = np.column_stack([np.ones(2 * n), np.concatenate([t, t]), d, d * np.concatenate([t, t])])
    coef, resid, xtx_inv = _qr_solve(X, y)
    scores = X * resid[:, None]
    month_scores = scores[:n] + scores[n:]
    S = hac_lrv_matrix(month_scores)[0]
    V = xtx_inv @ (n * S) @ xtx_inv
    se = float(math.sqrt(max(V[3, 3], 0.0)))
    diff = float(coef[3])
    p = pvalue_from_t(diff / se) if se > 0 else (1.0 if diff == 0 else 0.0)
    return TrendResult(diff, se, float(p), "hac", ("stacked",), tuple(coef.tolist()))


# ---------------------------------------------------------------------------
# beta regression


def beta_loglik(params, y, X):
    """Log-likelihood; ``params = (beta..., log_phi)``."""
    beta, phi = params[:-1], math.exp(params[-1])
    mu = expit(X @ beta)
    a, b = mu * phi, (1.0 - mu) * phi
    return float(np.sum(gammaln(phi) - gammaln(a) - gammaln(b)
                        + (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y)))


def beta_score(params, y, X):
    beta, phi = params[:-1], math.exp(params[-1])
    mu = expit(X @ beta)
    a, b = mu * phi, (1.0 - mu) * phi
    ystar = np.log(y) - np.log1p(-y)
    mustar = digamma(a) - digamma(b)
    w = mu * (1.0 - mu)
    g_beta = X.T @ (phi * (ystar - mustar) * w)
    g_phi = np.sum(mu * (ystar - mustar) + np.log1p(-y) - digamma(b) + digamma(phi))
    return np.append(g_beta, phi * g_phi)


def beta_hessian(params, y, X):
    """Observed Hessian of the log-likelihood in (beta, log_phi)."""
    beta, phi = params[:-1], math.exp(params[-1])
    mu = expit(X @ beta)
    a, b = mu * phi, (1.0 - mu) * phi
    ystar = np.log(y) - np.log1p(-y)
    mustar = digamma(a) - digamma(b)
    w = mu * (1.0 - mu)
    ta, tb = polygamma(1, a), polygamma(1, b)
    resid = ystar - mustar
    d_eta2 = -phi**2 * (ta + tb) * w**2 + phi * resid * w * (1.0 - 2.0 * mu)
    H_bb = X.T @ (d_eta2[:, None] * X)
    d_eta_phi = w * (resid + phi * (-mu * ta + (1.0 - mu) * tb))
    H_bphi = X.T @ d_eta_phi
    g_phi = np.sum(mu * resid + np.log1p(-y) - digamma(b) + digamma(phi))
    H_phiphi = np.sum(polygamma(1, phi) - mu**2 * ta - (1.0 - mu) ** 2 * tb)
    p = X.shape[1]
    H = np.empty((p + 1, p + 1))
    H[:p, :p] = H_bb
    H[:p, p] = H[p, :p] = phi * H_bphi
    H[p, p] = phi**2 * H_phiphi + phi * g_phi
    return H


@dataclass(frozen=True)
class BetaRegressionResult:
    coef: np.ndarray
    cov: np.ndarray
    phi: float
    loglik: float
    n_iter: int
    converged: bool
    loglik_path: tuple
    shrunk: bool = False
    degenerate: bool = False

    @property
    def se(self):
        return np.sqrt(np.maximum(np.diag(self.cov), 0.0))


def shrink_boundary(y):
    """Map [0, 1] into (0, 1) via (y (n - 1) + 0.5) / n when any value is on the boundary."""
    y = np.asarray(y, dtype=float)
    if np.any((y < 0) | (y > 1)):
        raise DomainError("beta regression response must lie in [0, 1]")
    if np.any((y == 0) | (y == 1)):
        n = y.size
        return (y * (n - 1) + 0.5) / n, True
    return y, False


def _bfgs_maximize(f, grad, x0, H0_inv, gtol, maxiter):
    x = x0.copy()
    fx = f(x)
    g = grad(x)
    Hinv = H0_inv
    path = [fx]
    eps = np.finfo(float).eps
    for it in range(1, maxiter + 1):
        if np.max(np.abs(g)) < gtol:
            return x, fx, g, it - 1, True, path
        d = Hinv @ g
        if g @ d <= 0:
            Hinv = np.eye(x.size) / max(np.max(np.abs(g)), 1.0)
            d = Hinv @ g
        step = 1.0
        accepted = False
        resolution = 16 * eps * max(abs(fx), 1.0)
        for _ in range(60):
            x_new = x + step * d
            f_new = f(x_new)
            if np.isfinite(f_new):
                gain = f_new - fx
                if abs(gain) <= resolution:
                    # objective can no longer rank the two points
                    break
                if gain >= 1e-4 * step * (g @ d):
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            return x, fx, g, it, np.max(np.abs(g)) < gtol, path
        g_new = grad(x_new)
        s = x_new - x
        yk = g - g_new
        sy = s @ yk
        if sy > 1e-300:
            rho = 1.0 / sy
            I = np.eye(x.size)
            Hinv = (I - rho * np.outer(s, yk)) @ Hinv @ (I - rho * np.outer(yk, s)) \
                + rho * np.outer(s, s)
        x, fx, g = x_new, f_new, g_new
        path.append(fx)
    return x, fx, g, maxiter, np.max(np.abs(g)) < gtol, path


def _newton_polish(theta, y, Z, gtol, maxiter):
    """Newton steps on the score once objective differences drop below rounding.

    A step is kept when it shrinks the largest gradient component.
    """
    g = beta_score(theta, y, Z)
    path = []
    ll = beta_loglik(theta, y, Z)
    for it in range(1, maxiter + 1):
        gmax = np.max(np.abs(g))
        if gmax < gtol:
            return theta, ll, g, it - 1, True, path
        try:
            d = np.linalg.solve(-beta_hessian(theta, y, Z), g)
        except np.linalg.LinAlgError:
            break
        step = 1.0
        for _ in range(30):
            cand = theta + step * d
            g_new = beta_score(cand, y, Z)
            if np.all(np.isfinite(g_new)) and np.max(np.abs(g_new)) < gmax:
                break
            step *= 0.5
        else:
            break
        theta, g = cand, g_new
        ll = beta_loglik(theta, y, Z)
        path.append(ll)
    return theta, ll, g, maxiter, bool(np.max(np.abs(g)) < gtol), path


def beta_regression(y, X, *, gtol=1e-8, maxiter=500) -> BetaRegressionResult:
    """ML beta regression with logit mean link and constant precision.

    ``X`` must start with an intercept column.  Non-intercept columns are
    standardized internally; coefficients and covariance are reported on the
    original scale.  Covariance is the inverse observed information.
    """
    y, shrunk = shrink_boundary(y)
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < MIN_MONTHS:
        raise InsufficientDataError(f"{n} observations, need at least {MIN_MONTHS}")
    if not np.allclose(X[:, 0], 1.0):
        raise ValueError("first column of X must be the intercept")

    if np.ptp(y) == 0:
        coef = np.zeros(p)
        coef[0] = float(logit(y[0]))
        return BetaRegressionResult(coef, np.zeros((p, p)), math.inf, math.nan, 0, True, (),
                                    shrunk, degenerate=True)

    center = np.r_[0.0, X[:, 1:].mean(axis=0)]
    scale = np.r_[1.0, X[:, 1:].std(axis=0)]
    scale[scale == 0] = 1.0
    Z = np.column_stack([X[:, 0], (X[:, 1:] - center[1:]) / scale[1:]])

    ly = logit(y)
    b0, resid, _ = _qr_solve(Z, ly)
    mu0 = expit(Z @ b0)
    s2 = resid @ resid / max(n - p, 1)
    phi0 = np.mean(mu0 * (1 - mu0) / (s2 * (mu0 * (1 - mu0)) ** 2)) - 1.0
    x0 = np.append(b0, math.log(phi0 if phi0 > 0 else 1.0))

    H0 = beta_hessian(x0, y, Z)
    try:
        H0_inv = np.linalg.inv(-H0)
        if not np.all(np.linalg.eigvalsh(0.5 * (H0_inv + H0_inv.T)) > 0):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        H0_inv = np.eye(p + 1) / n

    theta, ll, g, n_iter, converged, path = _bfgs_maximize(
        lambda t: beta_loglik(t, y, Z), lambda t: beta_score(t, y, Z), x0, H0_inv, gtol, maxiter)
    if not converged and n_iter < maxiter:
        theta, ll, g, extra, converged, tail = _newton_polish(theta, y, Z, gtol, maxiter - n_iter)
        n_iter += extra
        path = path + tail
    if not converged:
        raise OptimizationError(
            f"beta regression did not converge in {maxiter} iterations "
            f"(max |gradient| {np.max(np.abs(g)):.3g})", last_iterate=theta)

    info = -beta_hessian(theta, y, Z)
    cov_z = np.linalg.inv(info)[:p, :p]
    # beta_orig = M @ beta_std
    M = np.diag(1.0 / scale)
    M[0, 1:] = -center[1:] / scale[1:]
    coef = M @ theta[:p]
    cov = M @ cov_z @ M.T
    return BetaRegressionResult(coef, cov, math.exp(theta[-1]), ll, n_iter, True, tuple(path),
                                shrunk)


def beta_trend(y, control=None, **kw) -> TrendResult:
    """Logit-scale trend slope from a beta regression on (1, t, [control])."""
    vals, X = trend_design(y, control)
    res = beta_regression(vals, X, **kw)
    slope = float(res.coef[1])
    se = float(res.se[1])
    if res.degenerate:
        p = 1.0
    else:
        p = pvalue_from_t(slope / se) if se > 0 else (1.0 if slope == 0 else 0.0)
    flags = {"phi": res.phi, "boundary_shrinkage": res.shrunk, "iterations": res.n_iter,
             "degenerate": res.degenerate}
    controls = ("control",) if control is not None else ()
    return TrendResult(slope, se, float(p), "beta_regression", controls,
                       tuple(res.coef.tolist()), flags)


# ---------------------------------------------------------------------------
# summary


SUMMARY_STATISTICS = (
    "average", "standard_deviation", "minimum", "maximum",
    "trend", "trend_with_control", "trend_with_control_beta",
)


@dataclass(frozen=True)
class SummaryRow:
    model: str
    metric: str
    horizon: int | None
    group: str
    statistic: str
    value: float
    se: float = math.nan
    p_value: float = math.nan
    estimator: str = ""

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value)


def _trend_rows(base, name, fn):
    try:
        r = fn()
    except (InsufficientDataError, OptimizationError, AlignmentError,
            SingularDesignError) as exc:
        return [SummaryRow(*base, name, math.nan, estimator=f"error: {type(exc).__name__}")]
    return [SummaryRow(*base, name, r.scaled_slope, r.se * TREND_SCALE, r.p_value, r.estimator)]


def summarize_series(series, controls=None, *, robust=True, block_lengths=(4, 8, 12),
                     n_boot=DEFAULT_N_BOOT, seed=0):
    """Table-style summary rows for each series.

    Level statistics are in percent, trend coefficients and their SEs times
    1000.  ``controls`` maps ``(model, horizon)`` to the control series used by
    the "with control" rows.  With ``robust`` the plain trend is also reported
    under Hansen-Hodrick, stationary-bootstrap and block-bootstrap SEs.
    """
    controls = controls or {}
    rows = []
    for s in series:
        base = (s.model, s.metric, s.horizon, s.group)
        v = s.values
        if v.size == 0:
            continue
        sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        rows += [
            SummaryRow(*base, "average", 100.0 * float(np.mean(v))),
            SummaryRow(*base, "standard_deviation", 100.0 * sd),
            SummaryRow(*base, "minimum", 100.0 * float(np.min(v))),
            SummaryRow(*base, "maximum", 100.0 * float(np.max(v))),
        ]
        rows += _trend_rows(base, "trend", lambda: linear_trend(s, se="hac"))
        ctrl = controls.get((s.model, s.horizon))
        if ctrl is not None:
            rows += _trend_rows(base, "trend_with_control",
                                lambda: linear_trend(s, ctrl, se="hac"))
            rows += _trend_rows(base, "trend_with_control_beta", lambda: beta_trend(s, ctrl))
        if robust:
            if s.horizon is not None:
                rows += _trend_rows(base, "trend_hansen_hodrick",
                                    lambda: linear_trend(s, se="hansen_hodrick"))
            rows += _trend_rows(base, "trend_stationary_bootstrap", lambda: linear_trend(
                s, se="stationary_bootstrap", n_boot=n_boot, seed=seed))
            for L in block_lengths:
                if L <= len(s):
                    rows += _trend_rows(base, f"trend_block_bootstrap_{L}", lambda: linear_trend(
                        s, se="block_bootstrap", block_length=L, n_boot=n_boot, seed=seed))
    return rows
