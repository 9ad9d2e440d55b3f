import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from iatanomaly.config import EmConfig
from iatanomaly.dists import ExponentialParams, LogLogisticParams, ParetoParams, exp_sample, ll_pdf, ll_sample
from iatanomaly.errors import DomainError, InsufficientDataError
from iatanomaly.gof import ks_one_sample
from iatanomaly.mixtures import (
    CamelLogParams,
    ExpMixtureParams,
    ParetoMixtureParams,
    camellog_fit_em,
    camellog_pdf,
    camellog_sample,
    expmix_fit_em,
    loglikelihood,
    mixture_cdf,
    mixture_logpdf,
    mixture_quantile,
    mixture_sample,
    paretomix_fit_em,
)

IN = LogLogisticParams(300.0, 2.0)
OFF = LogLogisticParams(25200.0, 2.0)
TRUTH = CamelLogParams(0.75, IN, OFF)


def test_params_validation():
    with pytest.raises(ValueError):
        CamelLogParams(1.2, IN, OFF)
    with pytest.raises(ValueError):
        CamelLogParams(-0.1, IN, OFF)
    with pytest.raises(ValueError):
        ParetoMixtureParams(0.5, ParetoParams(1.0, 1.0), ParetoParams(2.0, 1.0))


def test_canonical_labeling_swaps_components():
    p = CamelLogParams(0.3, OFF, IN)
    assert p.in_component == IN and p.off_component == OFF
    assert p.theta == pytest.approx(0.7)
    assert p == CamelLogParams(0.7, IN, OFF)


def test_exp_mixture_labeling_by_mean():
    p = ExpMixtureParams(0.2, ExponentialParams(1e-4), ExponentialParams(1e-2))
    assert p.in_component.rate == 1e-2
    assert p.theta == pytest.approx(0.8)


# ---------------------------------------------------------------- density


def test_theta_one_equals_single_component():
    t = np.geomspace(1.0, 1e6, 50)
    np.testing.assert_allclose(camellog_pdf(t, CamelLogParams(1.0, IN, OFF)), ll_pdf(t, IN), rtol=1e-14)


def test_identical_components_equal_single_component():
    t = np.geomspace(1.0, 1e6, 50)
    np.testing.assert_allclose(camellog_pdf(t, CamelLogParams(0.5, IN, IN)), ll_pdf(t, IN), rtol=1e-14)


def test_pdf_is_weighted_sum():
    t = np.geomspace(1.0, 1e6, 50)
    np.testing.assert_allclose(camellog_pdf(t, TRUTH), 0.75 * ll_pdf(t, IN) + 0.25 * ll_pdf(t, OFF), rtol=1e-12)


def test_pdf_integrates_to_one():
    f = lambda y: math.exp(y) * float(camellog_pdf(math.exp(y), TRUTH))  # noqa: E731
    total, _ = integrate.quad(f, math.log(1e-6), math.log(1e13), limit=400, epsabs=1e-13)
    assert total == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.001, 0.999))
def test_quantile_inverts_cdf(theta, u):
    p = CamelLogParams(theta, IN, OFF)
    assert mixture_cdf(mixture_quantile(u, p), p) == pytest.approx(u, rel=1e-9)


# ---------------------------------------------------------------- sampling


def test_sample_fraction_below_geometric_midpoint():
    x = camellog_sample(100_000, TRUTH, seed=1)
    assert np.mean(x < math.sqrt(300.0 * 25200.0)) == pytest.approx(0.75, abs=0.01)


def test_sample_deterministic():
    np.testing.assert_array_equal(camellog_sample(500, TRUTH, 3), camellog_sample(500, TRUTH, 3))


def test_theta_one_sample_matches_single_component():
    p = CamelLogParams(1.0, IN, OFF)
    x = camellog_sample(2000, p, seed=4)
    assert ks_one_sample(x, lambda t: mixture_cdf(t, CamelLogParams(1.0, IN, IN))).p_value > 0.001


def test_samples_are_bimodal_in_log_bins():
    from iatanomaly.ingest import histogram_modes, log_histogram

    x = camellog_sample(50_000, TRUTH, seed=5)
    modes = histogram_modes(log_histogram(np.round(x) + 1, bins_per_decade=5))
    assert len(modes) == 2
    assert 300 / 3 < modes[0] < 300 * 3
    assert 25200 / 3 < modes[1] < 25200 * 3


def test_sample_passes_ks_against_mixture_cdf():
    pvals = [ks_one_sample(camellog_sample(500, TRUTH, s), lambda t: mixture_cdf(t, TRUTH)).p_value for s in range(100)]
    assert np.mean(np.array(pvals) < 0.05) <= 0.12


# ---------------------------------------------------------------- loglikelihood


def test_loglikelihood_brute_force():
    x = camellog_sample(200, TRUTH, seed=6)
    brute = sum(math.log(0.75 * float(ll_pdf(t, IN)) + 0.25 * float(ll_pdf(t, OFF))) for t in x)
    assert loglikelihood(TRUTH, x) == pytest.approx(brute, rel=1e-12)


def test_loglikelihood_single_point_at_median():
    expected = math.log(0.75 * 2.0 / (4 * 300.0) + 0.25 * float(ll_pdf(300.0, OFF)))
    assert loglikelihood(TRUTH, [300.0]) == pytest.approx(expected, rel=1e-12)


def test_loglikelihood_empty():
    with pytest.raises(DomainError):
        loglikelihood(TRUTH, [])


def test_pareto_floor_below_xmin():
    p = ParetoMixtureParams(0.5, ParetoParams(10.0, 1.0), ParetoParams(10.0, 3.0))
    assert loglikelihood(p, [5.0], floor=-745.0) == -745.0
    assert np.isneginf(mixture_logpdf(np.array([5.0]), p))[0]


# ---------------------------------------------------------------- EM


def test_em_recovers_parameters():
    x = camellog_sample(5000, TRUTH, seed=7)
    rep = camellog_fit_em(x, seed=7)
    p = rep.params
    assert rep.converged and not rep.collapsed
    assert p.theta == pytest.approx(0.75, rel=0.1)
    assert p.in_component.alpha == pytest.approx(300, rel=0.1)
    assert p.in_component.beta == pytest.approx(2.0, rel=0.1)
    assert p.off_component.alpha == pytest.approx(25200, rel=0.1)
    assert p.off_component.beta == pytest.approx(2.0, rel=0.1)
    assert rep.n_params == 5 and rep.n_iterations >= 1 and rep.n_obs == 5000


def test_em_trace_monotone():
    for seed in range(5):
        rep = camellog_fit_em(camellog_sample(1000, TRUTH, seed), seed=seed)
        assert np.all(np.diff(rep.loglik_trace) >= -1e-9)


def test_em_report_loglik_consistent():
    x = camellog_sample(800, TRUTH, seed=8)
    rep = camellog_fit_em(x, seed=8)
    assert rep.train_loglik == pytest.approx(loglikelihood(rep.params, x), abs=1e-9)


def test_em_beats_truth_loglik():
    x = camellog_sample(2000, TRUTH, seed=9)
    assert camellog_fit_em(x, seed=9).train_loglik >= loglikelihood(TRUTH, x)


def test_em_single_component_collapses():
    x = ll_sample(3000, IN, seed=10)
    rep = camellog_fit_em(x, seed=10)
    assert rep.collapsed or rep.params.theta >= 0.99
    if rep.collapsed:
        assert not rep.converged and rep.params.theta == 1.0


def test_em_deterministic():
    x = camellog_sample(1000, TRUTH, seed=11)
    assert camellog_fit_em(x, seed=1) == camellog_fit_em(x, seed=1)


def test_em_insufficient_data():
    with pytest.raises(InsufficientDataError):
        camellog_fit_em([1.0, 2.0, 3.0])
    with pytest.raises(InsufficientDataError):
        camellog_fit_em([5.0] * 50)
    with pytest.raises(DomainError):
        camellog_fit_em([1.0] * 9 + [-1.0, 2.0])


def test_em_respects_min_fit_size():
    x = camellog_sample(30, TRUTH, seed=12)
    with pytest.raises(InsufficientDataError):
        camellog_fit_em(x, EmConfig(min_fit_size=40))


def test_em_small_second_component():
    # 3% take-off mass: the restart schedule has to reach a small component
    p = CamelLogParams(30 / 31, IN, OFF)
    worse = 0
    for seed in range(30):
        x = camellog_sample(500, p, seed)
        worse += camellog_fit_em(x, seed=seed).train_loglik < loglikelihood(p, x)
    assert worse <= 2


def test_input_order_irrelevant():
    x = camellog_sample(1000, TRUTH, seed=13)
    a = camellog_fit_em(x, seed=0).params
    b = camellog_fit_em(x[::-1].copy(), seed=0).params
    assert b.theta == pytest.approx(a.theta, rel=1e-4)
    assert b.in_component.alpha == pytest.approx(a.in_component.alpha, rel=1e-4)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_scale_equivariance(c, seed):
    x = camellog_sample(2000, TRUTH, seed)
    a = camellog_fit_em(x, seed=seed).params
    b = camellog_fit_em(c * x, seed=seed).params
    assert b.in_component.alpha == pytest.approx(c * a.in_component.alpha, rel=0.02)
    assert b.off_component.alpha == pytest.approx(c * a.off_component.alpha, rel=0.02)
    assert b.theta == pytest.approx(a.theta, rel=0.02)
    assert b.in_component.beta == pytest.approx(a.in_component.beta, rel=0.02)
    assert b.off_component.beta == pytest.approx(a.off_component.beta, rel=0.02)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(1.5, 4.0), st.integers(0, 10_000))
def test_fitted_params_are_canonical(theta, beta, seed):
    p = CamelLogParams(theta, LogLogisticParams(100.0, beta), LogLogisticParams(20000.0, beta))
    fit = camellog_fit_em(camellog_sample(400, p, seed), seed=seed).params
    assert fit.in_component.alpha <= fit.off_component.alpha
    assert 0.0 <= fit.theta <= 1.0


def test_expmix_recovery():
    p = ExpMixtureParams(0.6, ExponentialParams(1 / 100), ExponentialParams(1 / 10000))
    x = mixture_sample(5000, p, seed=14)
    rep = expmix_fit_em(x, seed=14)
    assert rep.n_params == 3
    assert rep.params.theta == pytest.approx(0.6, rel=0.1)
    assert rep.params.in_component.rate == pytest.approx(1 / 100, rel=0.1)
    assert rep.params.off_component.rate == pytest.approx(1 / 10000, rel=0.1)


def test_expmix_single_rate_collapses():
    rep = expmix_fit_em(exp_sample(3000, ExponentialParams(0.01), seed=15), seed=15)
    assert rep.collapsed or min(rep.params.theta, 1 - rep.params.theta) < 0.01


def test_paretomix_shares_xmin_and_counts_params():
    x = camellog_sample(500, TRUTH, seed=16)
    rep = paretomix_fit_em(x, seed=16)
    assert rep.n_params == 3
    assert rep.params.in_component.xmin == rep.params.off_component.xmin == x.min()


def test_paretomix_trace_monotone():
    p = ParetoMixtureParams(0.5, ParetoParams(1.0, 0.5), ParetoParams(1.0, 3.0))
    rep = paretomix_fit_em(mixture_sample(2000, p, seed=17), seed=17)
    assert np.all(np.diff(rep.loglik_trace) >= -1e-9)
