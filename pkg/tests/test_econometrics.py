import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from peerperf.econometrics import (
    _qs_spectral_sum,
    andrews_bandwidth,
    hac_lrv,
    hac_lrv_matrix,
    ols_fit,
    pairwise_alpha_test,
    pairwise_alpha_tests,
    pvalue_from_t,
    qs_kernel,
    sandwich_cov,
)
from peerperf.errors import InsufficientDataError, SingularDesignError

from oracles import ar1, mp_normal_equations


# ---------------------------------------------------------------------------
# OLS


def test_ols_exact_line():
    x = np.linspace(-1, 1, 100)
    fit = ols_fit(2 + 3 * x, np.column_stack([np.ones(100), x]))
    np.testing.assert_allclose(fit.coef, [2, 3], atol=1e-12)
    assert np.max(np.abs(fit.resid)) < 1e-10
    assert (fit.nobs, fit.k) == (100, 1)


def test_ols_duplicated_column():
    x = np.arange(100.0)
    with pytest.raises(SingularDesignError):
        ols_fit(x, np.column_stack([np.ones(100), x, x]))


def test_ols_too_short():
    with pytest.raises(InsufficientDataError):
        ols_fit(np.ones(59), np.ones((59, 1)))


def test_ols_extended_precision_oracle(rng):
    X = np.column_stack([np.ones(200), rng.standard_normal((200, 4))])
    y = X @ rng.standard_normal(5) + rng.standard_normal(200)
    fit = ols_fit(y, X)
    np.testing.assert_allclose(fit.coef, mp_normal_equations(X, y), rtol=0, atol=1e-8)


def test_ols_residuals_orthogonal(rng):
    X = np.column_stack([np.ones(300), rng.standard_normal((300, 5)) * [1, 10, 1e-2, 3, 1]])
    y = rng.standard_normal(300)
    fit = ols_fit(y, X)
    rn = np.linalg.norm(fit.resid)
    for j in range(X.shape[1]):
        assert abs(X[:, j] @ fit.resid) <= 1e-8 * np.linalg.norm(X[:, j]) * rn


# ---------------------------------------------------------------------------
# HAC


def test_qs_kernel_values():
    assert qs_kernel(0.0) == 1.0
    x = np.array([1e-5, 1e-4, 0.5, 1.0, 3.0])
    z = 6 * np.pi * x / 5
    direct = 25 / (12 * np.pi**2 * x**2) * (np.sin(z) / z - np.cos(z))
    np.testing.assert_allclose(qs_kernel(x), direct, rtol=1e-7)
    np.testing.assert_allclose(qs_kernel(-x), qs_kernel(x))


def test_spectral_sum_matches_time_domain(rng):
    e = rng.standard_normal((3, 80, 2))
    bw = np.array([0.7, 4.0, 25.0])
    S = _qs_spectral_sum(e, bw)
    n = e.shape[1]
    for b in range(3):
        want = e[b].T @ e[b] / n
        for j in range(1, n):
            G = e[b, j:].T @ e[b, :-j] / n
            want += qs_kernel(j / bw[b]) * (G + G.T)
        np.testing.assert_allclose(S[b], want, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_hac_iid(seed):
    v = np.random.default_rng(seed).standard_normal(100_000)
    assert abs(hac_lrv(v - v.mean()) - 1.0) < 0.05


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_hac_ar1(seed):
    v = ar1(100_000, 0.5, np.random.default_rng(seed))
    assert abs(hac_lrv(v - v.mean()) / 4.0 - 1.0) < 0.05


def test_hac_zero_and_short():
    assert hac_lrv(np.zeros(50)) == 0.0
    with pytest.raises(InsufficientDataError):
        hac_lrv(np.ones(19))


def test_hac_clamps_unit_root():
    # a random walk would make the recoloring blow up without the 0.97 cap
    v = np.cumsum(np.random.default_rng(3).standard_normal(2000))
    lrv = hac_lrv(v - v.mean())
    assert np.isfinite(lrv) and lrv > 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=20, max_size=200), st.booleans())
def test_hac_nonnegative(values, prewhiten):
    v = np.array(values)
    assert hac_lrv(v - v.mean(), prewhiten=prewhiten) >= 0.0


def test_andrews_bandwidth_grows_with_persistence(rng):
    lo = andrews_bandwidth(ar1(5000, 0.1, rng))[0]
    hi = andrews_bandwidth(ar1(5000, 0.8, rng))[0]
    assert 0 < lo < hi


def test_sandwich_matches_white_without_autocorrelation(rng):
    # with a zero bandwidth the QS sum collapses to the White meat
    X = np.column_stack([np.ones(400), rng.standard_normal(400)])
    e = rng.standard_normal(400) * (1 + np.abs(X[:, 1]))
    s = X * e[:, None]
    S = hac_lrv_matrix(s, prewhiten=False, bandwidth=0.0)[0]
    np.testing.assert_allclose(S, s.T @ s / 400, rtol=1e-12)
    V = sandwich_cov(X, e, prewhiten=False, adjust=False)
    assert V.shape == (2, 2)
    np.testing.assert_allclose(V, V.T)


# ---------------------------------------------------------------------------
# p-values


def _quad_pvalue(t):
    tail, _ = integrate.quad(lambda x: math.exp(-x * x / 2) / math.sqrt(2 * math.pi),
                             abs(t), np.inf, epsabs=1e-15, epsrel=1e-13)
    return 2 * tail


def test_pvalue_examples():
    assert pvalue_from_t(0.0) == 1.0
    assert abs(pvalue_from_t(1.959964) - 0.05) < 1e-6
    assert abs(pvalue_from_t(1.959964) - _quad_pvalue(1.959964)) < 1e-12
    assert pvalue_from_t(-1.959964) == pvalue_from_t(1.959964)
    assert pvalue_from_t(np.inf) == 0.0


@pytest.mark.parametrize("t", [0.1, 0.674, 1.0, 1.644854, 2.5, 3.3, 5.0, 8.0])
def test_pvalue_quadrature_oracle(t):
    assert abs(pvalue_from_t(t) - _quad_pvalue(t)) <= 1e-12


# ---------------------------------------------------------------------------
# pairwise tests


def pair(rng, T=252, K=4, delta=0.0, vol=0.01):
    F = rng.standard_normal((T, K)) * 0.01
    base = F @ rng.normal(1, 0.3, K)
    r_i = base + delta + vol * rng.standard_normal(T)
    r_j = base + F @ rng.normal(0, 0.3, K) + vol * rng.standard_normal(T)
    return r_i, r_j, F


def test_identical_series():
    rng = np.random.default_rng(0)
    r, _, F = pair(rng)
    res = pairwise_alpha_test(r, r, F)
    assert res.delta_alpha == 0.0
    assert res.p_value == 1.0
    assert res.degenerate


def test_constant_shift():
    rng = np.random.default_rng(1)
    r, _, F = pair(rng)
    c = 3e-4
    ij = pairwise_alpha_test(r, r + c, F)
    ji = pairwise_alpha_test(r + c, r, F)
    assert ij.delta_alpha == pytest.approx(-c, abs=1e-15)
    assert abs(ij.t_stat) == abs(ji.t_stat)
    assert ij.p_value == 0.0 and ji.p_value == 0.0


def test_antisymmetry_and_scale(rng):
    r_i, r_j, F = pair(rng, delta=2e-4)
    a = pairwise_alpha_test(r_i, r_j, F)
    b = pairwise_alpha_test(r_j, r_i, F)
    assert b.delta_alpha == pytest.approx(-a.delta_alpha, abs=1e-15)
    assert abs(a.t_stat + b.t_stat) <= 1e-12 * max(1.0, abs(a.t_stat))
    assert abs(a.p_value - b.p_value) <= 1e-12
    c = pairwise_alpha_test(3.7 * r_i, 3.7 * r_j, F)
    assert c.delta_alpha == pytest.approx(3.7 * a.delta_alpha, rel=1e-10)
    assert abs(c.t_stat - a.t_stat) <= 1e-10 * max(1.0, abs(a.t_stat))
    assert abs(c.p_value - a.p_value) <= 1e-10
    assert a.t_stat == pytest.approx(a.delta_alpha / a.hac_se, rel=1e-14)


def test_overlap_floor(rng):
    r_i, r_j, F = pair(rng, T=100)
    r_i[:41] = np.nan
    with pytest.raises(InsufficientDataError):
        pairwise_alpha_test(r_i, r_j, F)
    r_i[40] = 0.0
    assert pairwise_alpha_test(r_i, r_j, F).nobs == 60


def test_window_selection(rng):
    r_i, r_j, F = pair(rng, T=300)
    a = pairwise_alpha_test(r_i, r_j, F, window=slice(100, 300))
    b = pairwise_alpha_test(r_i[100:], r_j[100:], F[100:])
    assert a == b


def test_batch_matches_single(rng):
    T, N = 200, 6
    F = rng.standard_normal((T, 4)) * 0.01
    R = F @ rng.normal(1, 0.3, (4, N)) + 0.01 * rng.standard_normal((T, N))
    R[rng.random((T, N)) < 0.05] = np.nan
    R[:, 0] = np.where(np.isnan(R[:, 0]), 0.0, R[:, 0])
    R[:, 1] = R[:, 0] + 0.0  # fully observed duplicate
    R[:150, 5] = np.nan  # too short
    pairs = np.array([(i, j) for i in range(N) for j in range(i + 1, N)])
    batch = pairwise_alpha_tests(R, F, pairs)
    for b, (i, j) in enumerate(pairs):
        if j == 5:
            assert not batch.valid[b]
            continue
        one = pairwise_alpha_test(R[:, i], R[:, j], F)
        assert batch.valid[b]
        assert batch.delta_alpha[b] == pytest.approx(one.delta_alpha, rel=1e-9, abs=1e-16)
        assert batch.p_value[b] == pytest.approx(one.p_value, rel=1e-9, abs=1e-12)
        assert batch.degenerate[b] == one.degenerate


def test_null_pvalues_uniform():
    rng = np.random.default_rng(2024)
    T, P = 252, 1000
    F = rng.standard_normal((T, 4)) * 0.01
    R = F @ rng.normal(1, 0.3, (4, 2 * P)) + 0.01 * rng.standard_normal((T, 2 * P))
    pairs = np.arange(2 * P).reshape(P, 2)
    p = pairwise_alpha_tests(R, F, pairs).p_value
    assert stats.kstest(p, "uniform").pvalue > 0.01
