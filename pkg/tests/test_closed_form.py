import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import oracles
from liqprem.closed_form import (
    HittingLawParams,
    discounted_hitting_factor_v2,
    empirical_moments,
    hitting_cdf,
    hitting_density,
    premium_gbm,
    put_component_v1,
)
from liqprem.core import (
    BPS,
    ConfigurationError,
    ContractTerms,
    DomainError,
    GbmParams,
    InsufficientDataError,
    Measure,
)

SIGMAS = (0.05, 0.10, 0.15, 0.20, 0.25)
V2_GRID = list(itertools.product(SIGMAS, (0.0, 0.01, 0.05), (0.8, 0.9, 0.99), (0.5, 1.0, 2.0)))


def test_density_vanishes_at_zero():
    law = HittingLawParams(a=math.log(0.9), mu=0.0, sigma=0.25)
    assert hitting_density(1e-6, law) < 1e-100
    assert hitting_density(np.array([1e-8, 1e-7]), law).max() == 0.0


def test_density_rejects_nonpositive_time():
    law = HittingLawParams(a=math.log(0.9), mu=0.0, sigma=0.25)
    with pytest.raises(DomainError):
        hitting_density(0.0, law)


@pytest.mark.parametrize("mu", [-0.05, 0.0, 0.02, 0.08])
@pytest.mark.parametrize("sigma", [0.1, 0.25])
def test_density_total_mass(mu, sigma):
    law = HittingLawParams(a=math.log(0.9), mu=mu, sigma=sigma)
    f = lambda t: hitting_density(t, law)
    mode = law.a**2 / (3 * sigma**2)
    head, _ = integrate.quad(f, 1e-12, 10 * mode, epsabs=1e-12, limit=500, points=[mode])
    tail, _ = integrate.quad(f, 10 * mode, np.inf, epsabs=1e-12, limit=500)
    expected = min(1.0, math.exp(2 * mu * law.a / sigma**2))
    assert head + tail == pytest.approx(expected, abs=1e-6)
    assert law.total_mass == pytest.approx(expected, abs=1e-15)


def test_density_matches_cdf_finite_difference():
    a, mu, sigma = math.log(0.9), 0.0, 0.05
    law = HittingLawParams(a, mu, sigma)
    h = 1e-4
    fd = (oracles.hit_cdf_quad(0.5 + h, a, mu, sigma) - oracles.hit_cdf_quad(0.5 - h, a, mu, sigma)) / (2 * h)
    assert hitting_density(0.5, law) == pytest.approx(fd, abs=1e-6)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 3.0])
@pytest.mark.parametrize("mu", [-0.03, 0.0, 0.04])
def test_cdf_against_reflection_and_quadrature(t, mu):
    a, sigma = math.log(0.9), 0.2
    law = HittingLawParams(a, mu, sigma)
    assert hitting_cdf(t, law) == pytest.approx(oracles.hit_cdf_reflection(t, a, mu, sigma), abs=1e-12)
    assert hitting_cdf(t, law) == pytest.approx(oracles.hit_cdf_quad(t, a, mu, sigma), abs=1e-9)


def test_v1_zero_tenor_and_vanishing_vol():
    assert put_component_v1(0.0, 0.9, 0.01, 0.25) == 0.0
    assert put_component_v1(20 / 252, 0.9, 0.01, 1e-6) == pytest.approx(0.0, abs=1e-300)


@pytest.mark.parametrize("theta_days", [1, 5, 10, 20])
@pytest.mark.parametrize("sigma", [0.05, 0.10, 0.15, 0.25])
@pytest.mark.parametrize("r", [0.0, 0.01])
def test_v1_matches_lognormal_quadrature(theta_days, sigma, r):
    theta = theta_days / 252
    got = put_component_v1(theta, 0.9, r, sigma)
    assert got == pytest.approx(oracles.put_at_barrier_quad(theta, 0.9, r, sigma, r), abs=1e-9)


@pytest.mark.parametrize("b", [-0.1, 0.0126, 0.2])
def test_v1_empirical_matches_quadrature(b):
    theta = 20 / 252
    got = put_component_v1(theta, 0.9, 0.01, 0.15, Measure.EMPIRICAL, b)
    assert got == pytest.approx(oracles.put_at_barrier_quad(theta, 0.9, 0.01, 0.15, b), abs=1e-9)


def test_v1_empirical_needs_drift():
    with pytest.raises(ConfigurationError):
        put_component_v1(0.1, 0.9, 0.01, 0.2, Measure.EMPIRICAL)


def test_v2_at_spot_is_one():
    assert discounted_hitting_factor_v2(1.0, 1.0, 1.0, 0.01, 0.2) == 1.0


def test_v2_barrier_above_spot():
    with pytest.raises(DomainError):
        discounted_hitting_factor_v2(1.0, 1.1, 1.0, 0.01, 0.2)


def test_v2_reference_case_quadrature():
    got = discounted_hitting_factor_v2(1.0, 0.9, 1.0, 0.01, 0.25)
    assert got == pytest.approx(oracles.discounted_hit_quad(1.0, 0.9, 1.0, 0.01, 0.25, 0.01), abs=1e-8)


@pytest.mark.parametrize("sigma, r, k, T", V2_GRID)
def test_v2_quadrature_grid_risk_neutral(sigma, r, k, T):
    got = discounted_hitting_factor_v2(T, k, 1.0, r, sigma)
    assert got == pytest.approx(oracles.discounted_hit_quad(T, k, 1.0, r, sigma, r), abs=1e-8)


@pytest.mark.parametrize("sigma, r, k, T", V2_GRID)
def test_v2_quadrature_grid_empirical(sigma, r, k, T):
    b = 0.0126 + 0.5 * sigma**2
    got = discounted_hitting_factor_v2(T, k, 1.0, r, sigma, Measure.EMPIRICAL, b)
    assert got == pytest.approx(oracles.discounted_hit_quad(T, k, 1.0, r, sigma, b), abs=1e-8)


@pytest.mark.parametrize("sigma", [0.10, 0.25])
def test_v2_zero_rate_is_hit_probability(sigma):
    # fine-step simulation with a bridge crossing correction, so the oracle is unbiased
    a, mu = math.log(0.9), -0.5 * sigma**2
    est, se = oracles.bridge_hit_probability(1.0, a, mu, sigma, n_steps=252, n_paths=20_000, seed=5)
    got = discounted_hitting_factor_v2(1.0, 0.9, 1.0, 0.0, sigma)
    assert abs(got - est) <= 3 * se


def test_premium_reference_bound():
    res = premium_gbm(ContractTerms(c_m=0.1, theta_days=1), GbmParams(r=0.01, sigma=0.25))
    assert res.m_r < 40 * BPS


def test_premium_zero_theta():
    assert premium_gbm(ContractTerms(theta_days=0), GbmParams(r=0.01, sigma=0.25)).m_r == 0.0


def test_premium_empirical_reference():
    sigma, mu = 0.0486, 0.0126
    res = premium_gbm(
        ContractTerms(theta_days=20), GbmParams(r=0.01, sigma=sigma, b=mu + 0.5 * sigma**2), Measure.EMPIRICAL
    )
    assert res.bps == pytest.approx(0.7, abs=0.2)


@pytest.mark.parametrize("measure", [Measure.RISK_NEUTRAL, Measure.EMPIRICAL])
def test_premium_factorizes(measure):
    terms = ContractTerms(c_m=0.15, theta_days=7.5, horizon_years=2.0)
    params = GbmParams(r=0.02, sigma=0.18, b=0.04)
    b = 0.04 if measure is Measure.EMPIRICAL else None
    v1 = put_component_v1(terms.theta_years, terms.barrier, 0.02, 0.18, measure, b)
    v2 = discounted_hitting_factor_v2(2.0, terms.barrier, 1.0, 0.02, 0.18, measure, b)
    assert premium_gbm(terms, params, measure).m_r == v1 * v2


@settings(max_examples=150, deadline=None)
@given(
    sigma=st.floats(0.01, 0.6),
    r=st.floats(0.0, 0.08),
    c_m=st.floats(0.02, 0.5),
    theta=st.floats(0.0, 60.0),
    T=st.floats(0.1, 5.0),
)
def test_component_bounds(sigma, r, c_m, theta, T):
    terms = ContractTerms(c_m=c_m, theta_days=theta, horizon_years=T)
    v1 = put_component_v1(terms.theta_years, terms.barrier, r, sigma)
    v2 = discounted_hitting_factor_v2(T, terms.barrier, 1.0, r, sigma)
    assert 0.0 <= v1 <= terms.barrier * math.exp(-r * terms.theta_years)
    assert 0.0 <= v2 <= 1.0
    assert 0.0 <= premium_gbm(terms, GbmParams(r=r, sigma=sigma)).m_r <= terms.barrier


@settings(max_examples=150, deadline=None)
@given(
    sigma=st.floats(0.05, 0.5),
    r=st.floats(0.0, 0.05),
    th=st.tuples(st.floats(0.0, 60.0), st.floats(0.0, 60.0)),
)
def test_premium_non_decreasing_in_theta(sigma, r, th):
    lo, hi = sorted(th)
    p = lambda d: premium_gbm(ContractTerms(theta_days=d), GbmParams(r=r, sigma=sigma)).m_r
    assert p(lo) <= p(hi) * (1 + 1e-12) + 1e-300


def test_put_decays_when_rate_dominates_volatility():
    # the at-the-barrier put loses time value when r is large against sigma
    lo, hi = 11 / 252, 19 / 252
    oracle = [oracles.put_at_barrier_quad(t, 0.9, 0.055, 0.02, 0.055) for t in (lo, hi)]
    got = [put_component_v1(t, 0.9, 0.055, 0.02) for t in (lo, hi)]
    assert oracle[1] < oracle[0]
    assert got == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("theta", [1, 5, 10, 20])
@pytest.mark.parametrize("r", [0.0, 0.01, 0.05])
def test_premium_non_decreasing_in_sigma_on_grid(theta, r):
    grid = np.round(np.arange(0.02, 0.505, 0.01), 4)
    vals = [premium_gbm(ContractTerms(theta_days=theta), GbmParams(r=r, sigma=s)).m_r for s in grid]
    assert np.all(np.diff(vals) >= 0)


def test_empirical_moments_constant():
    m = empirical_moments(np.full(100, 0.001))
    assert m.mu_emp == pytest.approx(0.252)
    assert m.sigma_emp == pytest.approx(0.0, abs=1e-12)
    assert m.b_hat == pytest.approx(0.252)


def test_empirical_moments_sampling():
    rng = np.random.default_rng(2024)
    mean, sd, n = 4e-4, 0.01, 1_000_000
    x = rng.normal(mean, sd, n)
    m = empirical_moments(x)
    assert abs(m.mu_emp - 252 * mean) <= 3 * 252 * sd / math.sqrt(n)
    assert abs(m.sigma_emp - math.sqrt(252) * sd) <= 3 * math.sqrt(252) * sd / math.sqrt(2 * n)
    assert m.b_hat == m.mu_emp + 0.5 * m.sigma_emp**2


def test_empirical_moments_too_short():
    with pytest.raises(InsufficientDataError):
        empirical_moments([0.01])
