import numpy as np
import pytest
from scipy.special import expit

from peerperf.errors import (
    AlignmentError,
    DomainError,
    InsufficientDataError,
    OptimizationError,
    SingularDesignError,
)
from peerperf.trend import (
    RatioSeries,
    beta_hessian,
    beta_loglik,
    beta_regression,
    beta_score,
    beta_trend,
    block_bootstrap_se,
    hansen_hodrick_se,
    linear_trend,
    politis_white_block_length,
    shrink_boundary,
    significance_stars,
    stationary_bootstrap_se,
    summarize_series,
    trend_design,
    trend_difference,
    white_cov,
)

ESTIMATOR_KW = [
    dict(se="hac"),
    dict(se="white"),
    dict(se="hansen_hodrick", lags=2),
    dict(se="stationary_bootstrap", n_boot=300, seed=1),
    dict(se="block_bootstrap", block_length=4, n_boot=300, seed=1),
]


def months(n, start="2014-01"):
    return np.datetime64(start, "M") + np.arange(n)


def series(values, **kw):
    return RatioSeries(months(len(values)), np.asarray(values), **kw)


def noisy_series(rng, n=81, rho=0.6, level=0.2, scale=0.02):
    e = rng.standard_normal(n + 100) * scale
    x = np.empty_like(e)
    x[0] = e[0]
    for t in range(1, e.size):
        x[t] = rho * x[t - 1] + e[t]
    return level + x[100:]


# ---------------------------------------------------------------------------
# linear trends


def test_exact_line():
    t = np.arange(40)
    res = linear_trend(series(0.3 - 0.001 * t, horizon=3))
    assert res.slope == pytest.approx(-0.001, abs=1e-14)
    assert res.scaled_slope == pytest.approx(-1.0, abs=1e-11)
    assert res.se == 0.0 and res.p_value == 0.0
    assert res.coef[0] == pytest.approx(0.3)


@pytest.mark.parametrize("kw", ESTIMATOR_KW, ids=lambda kw: kw["se"])
def test_constant_series(kw):
    res = linear_trend(series(np.full(36, 0.25)), **kw)
    assert res.slope == pytest.approx(0.0, abs=1e-15)
    assert res.p_value == 1.0


def test_constant_series_beta():
    res = beta_trend(series(np.full(36, 0.25)))
    assert res.slope == 0.0 and res.p_value == 1.0


def test_time_axis_uses_calendar_months():
    s = RatioSeries(np.array(["2014-01", "2014-02", "2014-05"], dtype="datetime64[M]"),
                    [0.1, 0.2, 0.3])
    _, X = trend_design(s)
    np.testing.assert_array_equal(X[:, 1], [0, 1, 4])


def test_minimum_length():
    with pytest.raises(InsufficientDataError):
        linear_trend(series(np.linspace(0.1, 0.2, 23)))


def test_misaligned_control():
    y = series(np.linspace(0.1, 0.3, 30))
    c = RatioSeries(months(30, "2014-02"), np.linspace(0.1, 0.3, 30))
    with pytest.raises(AlignmentError):
        linear_trend(y, c)
    with pytest.raises(AlignmentError):
        linear_trend(y.values, np.ones(29) * 0.5)


def test_rank_deficient_control(rng):
    y = noisy_series(rng, 40)
    with pytest.raises(SingularDesignError):
        linear_trend(y, np.arange(40.0), se="hac")
    with pytest.raises(SingularDesignError):
        linear_trend(y, np.full(40, 0.3), se="hac")


@pytest.mark.parametrize("kw", ESTIMATOR_KW, ids=lambda kw: kw["se"])
def test_additive_constant(kw, rng):
    y = noisy_series(rng)
    a = linear_trend(y, **kw)
    b = linear_trend(y + 0.37, **kw)
    assert b.coef[0] == pytest.approx(a.coef[0] + 0.37, abs=1e-12)
    assert abs(a.slope - b.slope) < 1e-10
    assert abs(a.se - b.se) < 1e-10
    assert abs(a.p_value - b.p_value) < 1e-10


def test_hansen_hodrick_default_lags(rng):
    s = series(noisy_series(rng, 60), horizon=12)
    res = linear_trend(s, se="hansen_hodrick")
    assert res.flags["lags"] == 11
    with pytest.raises(ValueError):
        linear_trend(s.values, se="hansen_hodrick")


def test_hansen_hodrick_zero_lags_is_white(rng):
    X = np.column_stack([np.ones(200), rng.standard_normal(200)])
    e = rng.standard_normal(200)
    se, fallback = hansen_hodrick_se(X, e, 0)
    np.testing.assert_allclose(se, np.sqrt(np.diag(white_cov(X, e))), rtol=1e-12)
    assert not fallback
    with pytest.raises(DomainError):
        hansen_hodrick_se(X, e, -1)


def test_hansen_hodrick_iid_close_to_white():
    rng = np.random.default_rng(11)
    X = np.ones((50_000, 1))
    e = rng.standard_normal(50_000)
    hh, _ = hansen_hodrick_se(X, e, 11)
    white = np.sqrt(white_cov(X, e)[0, 0])
    assert abs(hh[0] / white - 1) < 0.10


def test_hansen_hodrick_overlap():
    # overlapping 12-period sums of iid shocks form an MA(11)
    rng = np.random.default_rng(12)
    shocks = rng.standard_normal(5000 + 11)
    y = np.convolve(shocks, np.ones(12), mode="valid")
    X = np.ones((y.size, 1))
    e = y - y.mean()
    hh, fallback = hansen_hodrick_se(X, e, 11)
    assert hh[0] / np.sqrt(white_cov(X, e)[0, 0]) > 1.5
    assert not fallback


def test_hansen_hodrick_bartlett_fallback():
    e = np.tile([1.0, -1.0], 50)
    se, fallback = hansen_hodrick_se(np.ones((100, 1)), e, 1)
    assert fallback
    assert np.all(se >= 0)


def test_stationary_bootstrap_iid():
    ratios = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        y = rng.standard_normal(300)
        X = np.column_stack([np.ones(300), np.arange(300.0)])
        bs = stationary_bootstrap_se(y, X, n_boot=2000, seed=seed)
        coef, res, *_ = np.linalg.lstsq(X, y, rcond=None)
        classical = np.sqrt(res[0] / 298 * np.linalg.inv(X.T @ X)[1, 1])
        ratios.append(bs.se[1] / classical)
    assert abs(np.mean(ratios) - 1) < 0.15


def test_bootstrap_determinism(rng):
    y = noisy_series(rng)
    X = np.column_stack([np.ones(y.size), np.arange(y.size)])
    a = stationary_bootstrap_se(y, X, seed=3)
    b = stationary_bootstrap_se(y, X, seed=3)
    np.testing.assert_array_equal(a.se, b.se)
    for L in (4, 8, 12):
        np.testing.assert_array_equal(block_bootstrap_se(y, X, L, seed=3).se,
                                      block_bootstrap_se(y, X, L, seed=3).se)
    assert not np.array_equal(block_bootstrap_se(y, X, 4, seed=3).se,
                              block_bootstrap_se(y, X, 4, seed=4).se)


def test_block_length_one_is_iid_bootstrap(rng):
    y = noisy_series(rng)
    n = y.size
    X = np.column_stack([np.ones(n), np.arange(n)])
    idx = np.random.default_rng(5).integers(0, n, size=(500, n))
    coefs = np.array([np.linalg.solve(X[i].T @ X[i], X[i].T @ y[i]) for i in idx])
    bs = block_bootstrap_se(y, X, 1, n_boot=500, seed=5)
    np.testing.assert_allclose(bs.se, coefs.std(axis=0, ddof=1), rtol=1e-9)


def test_block_length_out_of_range(rng):
    y = noisy_series(rng, 30)
    X = np.column_stack([np.ones(30), np.arange(30)])
    for L in (0, 31, 2.5):
        with pytest.raises(DomainError):
            block_bootstrap_se(y, X, L)


def test_stationary_full_length_blocks_flagged(rng):
    y = noisy_series(rng, 48)
    X = np.column_stack([np.ones(48), np.arange(48)])
    bs = stationary_bootstrap_se(y, X, expected_block_length=48, n_boot=500)
    assert bs.degenerate
    assert np.all(np.isfinite(bs.se))
    res = linear_trend(y, se="stationary_bootstrap", block_length=48, n_boot=500)
    assert res.flags["degenerate"]


def test_politis_white_persistence(rng):
    lo = politis_white_block_length(rng.standard_normal(400))[0]
    hi = politis_white_block_length(noisy_series(rng, 400, rho=0.9))[0]
    assert 1 <= lo < hi


def test_trend_difference(rng):
    b = noisy_series(rng, 60)
    t = np.arange(60)
    same = trend_difference(series(b), series(b))
    assert same.slope == pytest.approx(0.0, abs=1e-15)
    d = trend_difference(series(np.clip(b + 0.001 * t, 0, 1)), series(b))
    assert d.slope == pytest.approx(0.001, abs=1e-12)


# ---------------------------------------------------------------------------
# beta regression


def beta_sample(rng, T, beta=(-1.0, 0.01), phi=50.0):
    t = 100.0 * np.arange(T) / T
    X = np.column_stack([np.ones(T), t])
    mu = expit(X @ np.asarray(beta))
    return rng.beta(mu * phi, (1 - mu) * phi), X


def test_beta_constant_half():
    res = beta_regression(np.full(40, 0.5), np.column_stack([np.ones(40), np.arange(40)]))
    assert res.coef[0] == 0.0 and res.coef[1] == 0.0
    assert res.degenerate


@pytest.mark.parametrize("seed", range(3))
def test_beta_recovery(seed):
    rng = np.random.default_rng(seed)
    y, X = beta_sample(rng, 5000)
    res = beta_regression(y, X)
    assert res.converged
    theta = np.append(res.coef, np.log(res.phi))
    truth = np.array([-1.0, 0.01, np.log(50.0)])
    # Mahalanobis distance in (beta0, beta1, log phi)
    p = X.shape[1]
    info = -beta_hessian(np.append(res.coef, np.log(res.phi)), y, X)
    d = theta - truth
    assert np.sqrt(d @ info @ d) <= 3.0
    assert np.all(np.abs(res.coef - truth[:p]) < 3 * res.se)


def test_beta_boundary_shrinkage(rng):
    y, X = beta_sample(rng, 200)
    y[5] = 0.0
    shrunk, flag = shrink_boundary(y)
    assert flag
    assert shrunk[5] == pytest.approx(0.5 / 200)
    res = beta_regression(y, X)
    assert res.shrunk
    assert beta_trend(series(y)).flags["boundary_shrinkage"]
    with pytest.raises(DomainError):
        shrink_boundary(np.array([0.5, 1.5]))


def test_beta_gradient_and_hessian(rng):
    y, X = beta_sample(rng, 300)
    h = 1e-6
    for _ in range(20):
        theta = np.array([rng.uniform(-2, 0), rng.uniform(-0.02, 0.03), rng.uniform(1, 5)])
        g = beta_score(theta, y, X)
        H = beta_hessian(theta, y, X)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd = (beta_loglik(theta + e, y, X) - beta_loglik(theta - e, y, X)) / (2 * h)
            assert abs(fd - g[k]) <= 1e-4 * max(abs(g[k]), 1.0)
            fd_h = (beta_score(theta + e, y, X) - beta_score(theta - e, y, X)) / (2 * h)
            np.testing.assert_allclose(fd_h, H[:, k], rtol=1e-4, atol=1e-4 * np.abs(H).max())


def test_beta_loglik_path_nondecreasing(rng):
    y, X = beta_sample(rng, 1000)
    res = beta_regression(y, X)
    path = np.array(res.loglik_path)
    tol = 1e-12 * np.abs(path).max()
    assert np.all(np.diff(path) >= -tol)
    assert res.loglik == pytest.approx(path[-1])


def test_beta_nonconvergence_carries_iterate(rng):
    y, X = beta_sample(rng, 500)
    with pytest.raises(OptimizationError) as info:
        beta_regression(y, X, maxiter=1)
    assert info.value.last_iterate is not None
    assert info.value.last_iterate.shape == (3,)


def test_beta_trend_with_control(rng):
    y = np.clip(noisy_series(rng, 81), 0.01, 0.99)
    c = np.clip(noisy_series(rng, 81, level=0.3), 0.01, 0.99)
    res = beta_trend(series(y), series(c))
    assert res.estimator == "beta_regression"
    assert len(res.coef) == 3
    assert 0 <= res.p_value <= 1


# ---------------------------------------------------------------------------
# summaries


def _stat(rows, name):
    return next(r for r in rows if r.statistic == name)


def test_summary_single_value():
    rows = summarize_series([series([0.2])], robust=False)
    assert _stat(rows, "average").value == pytest.approx(20.0)
    assert _stat(rows, "standard_deviation").value == 0.0
    assert _stat(rows, "minimum").value == _stat(rows, "maximum").value == pytest.approx(20.0)


def test_summary_two_points():
    rows = summarize_series([series([0.2, 0.3])], robust=False)
    assert _stat(rows, "average").value == pytest.approx(25.0)
    assert _stat(rows, "standard_deviation").value == pytest.approx(7.0710678, abs=1e-6)


def test_stars():
    assert significance_stars(0.004) == "***"
    assert significance_stars(0.03) == "**"
    assert significance_stars(0.07) == "*"
    assert significance_stars(0.2) == ""
    assert significance_stars(float("nan")) == ""


def test_summary_rows_full(rng):
    y = series(noisy_series(rng), horizon=3, group="brown", model="carhart4")
    c = series(noisy_series(rng), horizon=3, group="neutral", model="carhart4")
    rows = summarize_series([y], {("carhart4", 3): c}, n_boot=200)
    names = [r.statistic for r in rows]
    assert names == ["average", "standard_deviation", "minimum", "maximum", "trend",
                     "trend_with_control", "trend_with_control_beta", "trend_hansen_hodrick",
                     "trend_stationary_bootstrap", "trend_block_bootstrap_4",
                     "trend_block_bootstrap_8", "trend_block_bootstrap_12"]
    trend = _stat(rows, "trend")
    direct = linear_trend(y)
    assert trend.value == pytest.approx(1000 * direct.slope)
    assert trend.se == pytest.approx(1000 * direct.se)
    assert trend.stars == significance_stars(direct.p_value)
