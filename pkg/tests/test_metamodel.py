import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from iatanomaly.dists import LogLogisticParams, ll_cdf, ll_logpdf
from iatanomaly.errors import DegenerateFitError, DomainError, InsufficientDataError
from iatanomaly.metamodel import (
    MetaClickParams,
    NegativeDependenceWarning,
    UserFeatures,
    fit_metaclick,
    gumbel_copula_cdf,
    gumbel_copula_logdensity,
    kendall_tau,
    kendall_tau_direct,
    metaclick_cdf,
    metaclick_logpdf,
    metaclick_sample,
    sample_copula,
)

P = MetaClickParams.from_values(1.12, 3.25, 5.0, math.log(300.0), 20.0)
etas = st.floats(1.0, 8.0)
units = st.floats(1e-6, 1 - 1e-6)


def expanded_cdf(r, m, p):
    """Direct coding of the joint CDF in its expanded exponential form."""
    a_r, b_r = p.r_marginal.alpha, p.r_marginal.beta
    a_m, b_m = p.m_marginal.alpha, p.m_marginal.beta
    x = math.log(1 + (r / a_r) ** (-b_r))
    y = math.log(1 + (m / a_m) ** (-b_m))
    return math.exp(-((x**p.eta + y**p.eta) ** (1 / p.eta)))


# ---------------------------------------------------------------- copula


def test_copula_independence_at_eta_one():
    u, v = np.meshgrid(np.linspace(0, 1, 21), np.linspace(0, 1, 21))
    np.testing.assert_allclose(gumbel_copula_cdf(u, v, 1.0), u * v, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(units, etas)
def test_copula_boundaries(u, eta):
    assert gumbel_copula_cdf(u, 1.0, eta) == u
    assert gumbel_copula_cdf(1.0, u, eta) == u
    assert gumbel_copula_cdf(u, 0.0, eta) == 0.0
    assert gumbel_copula_cdf(0.0, u, eta) == 0.0


def test_copula_comonotone_limit():
    # on the diagonal C(u, u) = u ** (2 ** (1 / eta)); the gap to u peaks at
    # u = 1/e with size (2 ** (1 / eta) - 1) / e, about 5.1e-3 at eta = 50
    u = np.linspace(0.01, 0.99, 99)
    np.testing.assert_allclose(gumbel_copula_cdf(u, u, 50.0), u ** (2 ** (1 / 50)), rtol=1e-13)
    assert np.max(np.abs(gumbel_copula_cdf(u, u, 50.0) - u)) < (2 ** (1 / 50) - 1) / math.e + 1e-12
    assert np.max(np.abs(gumbel_copula_cdf(u, u, 500.0) - u)) < 1e-3


def test_copula_rejects_bad_input():
    with pytest.raises(DomainError):
        gumbel_copula_cdf(0.5, 0.5, 0.9)
    with pytest.raises(DomainError):
        gumbel_copula_cdf(1.5, 0.5, 2.0)


@settings(max_examples=30, deadline=None)
@given(etas, st.integers(0, 2**32 - 1))
def test_copula_two_increasing(eta, seed):
    rng = np.random.default_rng(seed)
    u = np.sort(rng.uniform(0, 1, (100, 2)), axis=1)
    v = np.sort(rng.uniform(0, 1, (100, 2)), axis=1)
    vol = (
        gumbel_copula_cdf(u[:, 1], v[:, 1], eta)
        - gumbel_copula_cdf(u[:, 0], v[:, 1], eta)
        - gumbel_copula_cdf(u[:, 1], v[:, 0], eta)
        + gumbel_copula_cdf(u[:, 0], v[:, 0], eta)
    )
    assert np.all(vol >= -1e-12)


def mp_mixed_difference(u, v, eta, h=mpmath.mpf("1e-12")):
    """Central mixed second difference of the copula CDF at 40 digits."""
    with mpmath.workdps(40):
        eta = mpmath.mpf(eta)

        def C(a, b):
            return mpmath.exp(-(((-mpmath.log(a)) ** eta + (-mpmath.log(b)) ** eta) ** (1 / eta)))

        u, v = mpmath.mpf(u), mpmath.mpf(v)
        return float((C(u + h, v + h) - C(u + h, v - h) - C(u - h, v + h) + C(u - h, v - h)) / (4 * h * h))


@pytest.mark.parametrize("eta", [1.0, 1.12, 2.0, 5.0])
def test_copula_density_matches_mixed_finite_difference(eta):
    g = np.linspace(0.05, 0.95, 10)
    u, v = np.meshgrid(g, np.linspace(0.03, 0.97, 20))
    u, v = u.ravel(), v.ravel()
    fd = np.array([mp_mixed_difference(a, b, eta) for a, b in zip(u, v)])
    dens = np.exp(gumbel_copula_logdensity(u, v, eta))
    assert np.max(np.abs(dens / fd - 1)) < 1e-5


def test_copula_density_double_precision_difference():
    # the same check in plain floats, where cancellation limits accuracy
    u, v = np.meshgrid(np.linspace(0.05, 0.95, 10), np.linspace(0.03, 0.97, 20))
    u, v = u.ravel(), v.ravel()
    h = 1e-4
    fd = (
        gumbel_copula_cdf(u + h, v + h, 1.12)
        - gumbel_copula_cdf(u + h, v - h, 1.12)
        - gumbel_copula_cdf(u - h, v + h, 1.12)
        + gumbel_copula_cdf(u - h, v - h, 1.12)
    ) / (4 * h * h)
    assert np.max(np.abs(np.exp(gumbel_copula_logdensity(u, v, 1.12)) / fd - 1)) < 1e-5


@pytest.mark.parametrize("eta", [1.12, 2.0])
def test_copula_density_integrates_to_one(eta):
    # substitute u = expit(s), v = expit(w) to flatten the corners
    def f(w, s):
        u, v = 1 / (1 + math.exp(-s)), 1 / (1 + math.exp(-w))
        return math.exp(float(gumbel_copula_logdensity(u, v, eta))) * u * (1 - u) * v * (1 - v)

    total, _ = integrate.dblquad(f, -30, 30, -30, 30, epsabs=1e-7)
    assert total == pytest.approx(1.0, abs=1e-3)


# ---------------------------------------------------------------- joint CDF / density


def test_cdf_at_medians_independent():
    p = MetaClickParams.from_values(1.0, 3.0, 4.0, 6.0, 10.0)
    assert metaclick_cdf(3.0, 6.0, p) == pytest.approx(0.25, rel=1e-14)


def test_cdf_matches_expanded_form():
    rng = np.random.default_rng(0)
    r = P.r_marginal.alpha * np.exp(rng.normal(0, 0.5, 100))
    m = P.m_marginal.alpha * np.exp(rng.normal(0, 0.1, 100))
    ours = metaclick_cdf(r, m, P)
    ref = np.array([expanded_cdf(a, b, P) for a, b in zip(r, m)])
    np.testing.assert_allclose(ours, ref, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("m", [4.0, 5.7, 7.0])
def test_marginal_limits(m):
    assert metaclick_cdf(1e9 * P.r_marginal.alpha, m, P) == pytest.approx(ll_cdf(m, P.m_marginal), abs=1e-6)
    r = m - 2.0
    assert metaclick_cdf(r, 1e9 * P.m_marginal.alpha, P) == pytest.approx(ll_cdf(r, P.r_marginal), abs=1e-6)


def test_logpdf_independence_factorizes():
    p = MetaClickParams.from_values(1.0, 3.0, 4.0, 6.0, 10.0)
    r, m = np.array([0.5, 3.0, 40.0]), np.array([2.0, 6.0, 9.0])
    expected = ll_logpdf(r, p.r_marginal) + ll_logpdf(m, p.m_marginal)
    np.testing.assert_array_equal(metaclick_logpdf(r, m, p), expected)


def test_joint_density_matches_mixed_finite_difference_of_cdf():
    rng = np.random.default_rng(1)
    u = rng.uniform(0.05, 0.95, 200)
    v = rng.uniform(0.05, 0.95, 200)
    r = P.r_marginal.alpha * (u / (1 - u)) ** (1 / P.r_marginal.beta)
    m = P.m_marginal.alpha * (v / (1 - v)) ** (1 / P.m_marginal.beta)
    hr, hm = 1e-4 * r, 1e-4 * m
    fd = (
        metaclick_cdf(r + hr, m + hm, P)
        - metaclick_cdf(r + hr, m - hm, P)
        - metaclick_cdf(r - hr, m + hm, P)
        + metaclick_cdf(r - hr, m - hm, P)
    ) / (4 * hr * hm)
    dens = np.exp(metaclick_logpdf(r, m, P))
    assert np.max(np.abs(dens / fd - 1)) < 1e-5


def test_joint_density_integrates_to_one():
    def f(b, a):
        r, m = math.exp(a), math.exp(b)
        return math.exp(float(metaclick_logpdf(r, m, P))) * r * m

    lo_r, hi_r = math.log(P.r_marginal.alpha) - 40 / 5, math.log(P.r_marginal.alpha) + 40 / 5
    lo_m, hi_m = math.log(P.m_marginal.alpha) - 40 / 20, math.log(P.m_marginal.alpha) + 40 / 20
    total, _ = integrate.dblquad(f, lo_r, hi_r, lo_m, hi_m, epsabs=1e-8)
    assert total == pytest.approx(1.0, abs=1e-3)


def test_logpdf_extremes_are_finite_and_flagged():
    r = np.array([1e-30, 3.0, 1e30])
    m = np.array([5.7, 1e-30, 5.7])
    out, flags = metaclick_logpdf(r, m, P, return_flags=True)
    assert np.all(np.isfinite(out))
    assert flags.tolist() == [True, True, True]
    _, ok = metaclick_logpdf(3.0, 5.7, P, return_flags=True)
    assert not ok


def test_logpdf_domain():
    with pytest.raises(DomainError):
        metaclick_logpdf(-1.0, 5.0, P)


# ---------------------------------------------------------------- Kendall tau


def test_tau_examples():
    x = np.arange(10.0)
    assert kendall_tau(x, x**2) == 1.0
    assert kendall_tau(x, -x) == -1.0
    assert kendall_tau([(1, 1), (2, 3), (3, 2)]) == pytest.approx(1 / 3)


def test_tau_rejects_short_input():
    with pytest.raises(DomainError):
        kendall_tau([(1, 2)])


def brute_tau(x, y):
    n = len(x)
    s = 0
    for i in range(n):
        for j in range(i + 1, n):
            prod = (x[i] - x[j]) * (y[i] - y[j])
            s += (prod > 0) - (prod < 0)
    return s / (n * (n - 1) / 2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=2, max_size=60))
def test_tau_matches_pair_count_with_ties(pairs):
    x = [p[0] for p in pairs]
    y = [p[1] for p in pairs]
    assert kendall_tau(pairs) == brute_tau(x, y)


def test_fast_tau_agrees_with_direct():
    from iatanomaly.metamodel import _tau_fast

    rng = np.random.default_rng(2)
    x = rng.normal(size=3000)
    y = x + rng.normal(size=3000)
    assert _tau_fast(x, y) == pytest.approx(kendall_tau_direct(x, y), abs=1e-12)
    xi, yi = np.round(x), np.round(y)  # heavy ties
    assert _tau_fast(xi, yi) == pytest.approx(kendall_tau_direct(xi, yi), abs=1e-12)


def test_tau_matches_scipy_tau_a_without_ties():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=400), rng.normal(size=400)
    assert kendall_tau(x, y) == pytest.approx(stats.kendalltau(x, y).statistic, abs=1e-12)


# ---------------------------------------------------------------- sampling and fitting


def test_sample_independence_at_eta_one():
    u, v = sample_copula(10_000, 1.0, seed=4)
    assert abs(kendall_tau(u, v)) < 0.02


@pytest.mark.parametrize("eta", [1.0, 1.12, 1.3, 2.0])
def test_sampled_tau_round_trip(eta):
    u, v = sample_copula(10_000, eta, seed=5)
    tau = kendall_tau(u, v)
    assert tau == pytest.approx(1 - 1 / eta, abs=0.02)
    assert 1 / (1 - tau) == pytest.approx(eta, abs=0.05)


def test_sample_marginals_pass_ks():
    feats = metaclick_sample(5000, P, seed=6)
    r = np.array([f.r for f in feats])
    m = np.array([f.m for f in feats])
    assert stats.kstest(r, lambda t: ll_cdf(t, P.r_marginal)).pvalue > 0.01
    assert stats.kstest(m, lambda t: ll_cdf(t, P.m_marginal)).pvalue > 0.01


def test_sample_deterministic_and_ids():
    a = metaclick_sample(50, P, seed=7)
    assert a == metaclick_sample(50, P, seed=7)
    assert a[0].user_id == "sim00" and a[-1].user_id == "sim49"


def test_fit_recovers_eta_and_marginals():
    feats = metaclick_sample(5000, P, seed=8)
    fit = fit_metaclick(feats)
    assert fit.eta == pytest.approx(1.12, abs=0.05)
    assert fit.r_marginal.alpha == pytest.approx(np.median([f.r for f in feats]), rel=0.05)
    assert fit.m_marginal.alpha == pytest.approx(np.median([f.m for f in feats]), rel=0.05)


def test_fit_independent_features():
    p = MetaClickParams.from_values(1.0, 3.0, 5.0, 6.0, 20.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeDependenceWarning)
        fit = fit_metaclick(metaclick_sample(5000, p, seed=9))
    assert fit.eta == pytest.approx(1.0, abs=0.03)


def test_fit_negative_dependence_clamps():
    feats = [UserFeatures(str(i), float(i + 1), float(100 - i)) for i in range(40)]
    with pytest.warns(NegativeDependenceWarning):
        assert fit_metaclick(feats).eta == 1.0


def test_fit_comonotone_raises():
    feats = [UserFeatures(str(i), float(i + 1), float(i + 2) ** 1.5) for i in range(40)]
    with pytest.raises(DegenerateFitError):
        fit_metaclick(feats)


def test_fit_needs_enough_users():
    with pytest.raises(InsufficientDataError):
        fit_metaclick(metaclick_sample(29, P, seed=10))


def test_params_round_trip_dict():
    assert MetaClickParams.from_dict(P.as_dict()) == P


def test_params_reject_eta_below_one():
    with pytest.raises(ValueError):
        MetaClickParams(0.9, LogLogisticParams(1, 1), LogLogisticParams(1, 1))
