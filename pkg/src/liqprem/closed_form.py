"""Closed-form premium when the fund follows a geometric Brownian motion.

The reinsurer writes a put struck at the barrier K at the (random) breach time and it
expires after the liquidity window. Its value factorizes into the at-the-money put value
``put_component_v1`` and the expected discount factor to the breach time
``discounted_hitting_factor_v2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import log_ndtr, ndtr

from .core import (
    TRADING_DAYS,
    ConfigurationError,
    ContractTerms,
    DomainError,
    GbmParams,
    InsufficientDataError,
    Measure,
    PremiumResult,
)


@dataclass(frozen=True)
class HittingLawParams:
    """First passage of ``mu t + sigma W_t`` to the level ``a``."""

    a: float
    mu: float
    sigma: float

    @classmethod
    def for_barrier(cls, K: float, x0: float, drift: float, sigma: float) -> "HittingLawParams":
        return cls(a=math.log(K / x0), mu=drift - 0.5 * sigma * sigma, sigma=sigma)

    @property
    def total_mass(self) -> float:
        """Probability that the level is ever reached."""
        if self.a == 0:
            return 1.0
        return min(1.0, math.exp(2.0 * self.mu * self.a / self.sigma**2))


def hitting_density(t, law: HittingLawParams):
    """Inverse-Gaussian first-passage density (per year); accepts scalars or arrays."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("hitting density is defined for t > 0 only")
    a, mu, s = law.a, law.mu, law.sigma
    out = abs(a) / (s * np.sqrt(2.0 * np.pi * t_arr**3)) * np.exp(
        -((a - mu * t_arr) ** 2) / (2.0 * s * s * t_arr)
    )
    return float(out) if out.ndim == 0 else out


def hitting_cdf(t: float, law: HittingLawParams) -> float:
    """P(tau <= t) for a barrier below the start (a < 0)."""
    if t <= 0:
        return 0.0
    a, mu, s = law.a, law.mu, law.sigma
    rt = s * math.sqrt(t)
    first = ndtr((a - mu * t) / rt)
    second = math.exp(2.0 * mu * a / (s * s) + float(log_ndtr((a + mu * t) / rt)))
    return float(first + second)


def _resolve_drift(r: float, measure: Measure, b: Optional[float]) -> float:
    if Measure.parse(measure) is Measure.RISK_NEUTRAL:
        return r
    if b is None:
        raise ConfigurationError("empirical measure requires an empirical drift b")
    return b


def put_component_v1(
    theta_years: float,
    K: float,
    r: float,
    sigma: float,
    measure: Measure = Measure.RISK_NEUTRAL,
    b: Optional[float] = None,
) -> float:
    """Value at the breach time of the put struck at K with spot K and tenor theta_years.

    Under the empirical measure the terminal spot grows at ``b`` but the payoff is still
    discounted at ``r``.
    """
    drift = _resolve_drift(r, measure, b)
    if theta_years < 0:
        raise DomainError(f"theta_years must be non-negative, got {theta_years}")
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if theta_years == 0:
        return 0.0
    root = math.sqrt(theta_years)
    d1 = (drift + 0.5 * sigma * sigma) * root / sigma
    d2 = d1 - sigma * root
    growth = math.exp((drift - r) * theta_years)
    value = K * (math.exp(-r * theta_years) * ndtr(-d2) - growth * ndtr(-d1))
    return float(min(max(value, 0.0), K * math.exp(-r * theta_years)))


def discounted_hitting_factor_v2(
    T_years: float,
    K: float,
    x0: float,
    r: float,
    sigma: float,
    measure: Measure = Measure.RISK_NEUTRAL,
    b: Optional[float] = None,
) -> float:
    """E[exp(-r tau) 1{tau <= T}] for the first passage of the fund down to K."""
    drift = _resolve_drift(r, measure, b)
    if K > x0:
        raise DomainError(f"barrier {K} lies above the initial value {x0}")
    if K <= 0:
        raise DomainError(f"barrier must be positive, got {K}")
    if T_years <= 0:
        raise DomainError(f"T_years must be positive, got {T_years}")
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if K == x0:
        return 1.0

    nu = drift - 0.5 * sigma * sigma
    beta = math.sqrt(nu * nu + 2.0 * r * sigma * sigma)
    alpha_plus = (nu + beta) / sigma**2
    alpha_minus = (nu - beta) / sigma**2
    log_k = math.log(K / x0)
    delta = 1.0  # sign(ln(x0 / K)) for K < x0
    root = sigma * math.sqrt(T_years)
    # K^alpha can overflow for small sigma while the normal tail underflows; combine in logs
    upper = alpha_plus * log_k + float(log_ndtr(delta * (log_k + beta * T_years) / root))
    lower = alpha_minus * log_k + float(log_ndtr(delta * (log_k - beta * T_years) / root))
    value = math.exp(upper) + math.exp(lower)
    return float(min(max(value, 0.0), 1.0))


def premium_gbm(
    terms: ContractTerms, params: GbmParams, measure: Measure = Measure.RISK_NEUTRAL
) -> PremiumResult:
    """Fair upfront premium (fraction of x0) as the product of the two components."""
    measure = Measure.parse(measure)
    b = params.b if measure is Measure.EMPIRICAL else None
    v1 = put_component_v1(terms.theta_years, terms.barrier, params.r, params.sigma, measure, b)
    v2 = discounted_hitting_factor_v2(
        terms.horizon_years, terms.barrier, terms.x0, params.r, params.sigma, measure, b
    )
    return PremiumResult(m_r=v1 / terms.x0 * v2)


class EmpiricalMoments(NamedTuple):
    mu_emp: float
    sigma_emp: float
    b_hat: float


def empirical_moments(returns) -> EmpiricalMoments:
    """Annualized mean and volatility of daily log-returns and the implied arithmetic drift.

    Uses the unbiased sample variance around the daily mean.
    """
    values = np.asarray(getattr(returns, "log_returns", returns), dtype=float)
    if values.size < 2:
        raise InsufficientDataError(f"need at least 2 returns, got {values.size}")
    mu_emp = TRADING_DAYS * float(np.mean(values))
    sigma_emp = math.sqrt(TRADING_DAYS * float(np.var(values, ddof=1)))
    return EmpiricalMoments(mu_emp, sigma_emp, mu_emp + 0.5 * sigma_emp**2)
