"""Shared domain types and the payoff algebra of the first-loss / reinsurance structure.

All monetary amounts are in currency units; the default initial investment is 1.0 so
that premiums read directly as fractions of the investment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

TRADING_DAYS = 252
BPS = 1e-4


class LiqpremError(Exception):
    """Base class for computation errors raised by this package."""


class DomainError(LiqpremError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(LiqpremError, ValueError):
    """Inconsistent or incomplete parameter set."""


class InsufficientDataError(LiqpremError, ValueError):
    pass


class EstimationError(LiqpremError, RuntimeError):
    pass


class Measure(str, Enum):
    RISK_NEUTRAL = "risk_neutral"
    EMPIRICAL = "empirical"

    @classmethod
    def parse(cls, value: "str | Measure") -> "Measure":
        if isinstance(value, Measure):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"q": cls.RISK_NEUTRAL, "p": cls.EMPIRICAL, "real_world": cls.EMPIRICAL}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown measure {value!r}") from None


@dataclass(frozen=True)
class ContractTerms:
    """First-loss contract with a reinsured second tranche.

    ``theta_days`` is the liquidity window in trading days and may be fractional.
    """

    x0: float = 1.0
    c_m: float = 0.1
    alpha_m: float = 0.0
    m_m: float = 0.0
    horizon_years: float = 1.0
    theta_days: float = 1.0

    def __post_init__(self) -> None:
        if not (self.x0 > 0 and math.isfinite(self.x0)):
            raise DomainError(f"x0 must be positive, got {self.x0}")
        if not 0.0 < self.c_m < 1.0:
            raise DomainError(f"c_m must lie in (0, 1), got {self.c_m}")
        if not 0.0 <= self.alpha_m < 1.0:
            raise DomainError(f"alpha_m must lie in [0, 1), got {self.alpha_m}")
        if not 0.0 <= self.m_m < 1.0:
            raise DomainError(f"m_m must lie in [0, 1), got {self.m_m}")
        if not self.horizon_years > 0:
            raise DomainError(f"horizon_years must be positive, got {self.horizon_years}")
        if not (self.theta_days >= 0 and math.isfinite(self.theta_days)):
            raise DomainError(f"theta_days must be non-negative, got {self.theta_days}")

    @property
    def barrier(self) -> float:
        """Liquidation barrier K = (1 - c_m) x0."""
        return (1.0 - self.c_m) * self.x0

    @property
    def barrier_fraction(self) -> float:
        return 1.0 - self.c_m

    @property
    def theta_years(self) -> float:
        return self.theta_days / TRADING_DAYS


@dataclass(frozen=True)
class GbmParams:
    """Single-regime market. ``b`` is the real-world drift, only needed for empirical valuation."""

    r: float
    sigma: float
    b: Optional[float] = None

    def __post_init__(self) -> None:
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive, got {self.sigma}")

    def drift(self, measure: Measure) -> float:
        if Measure.parse(measure) is Measure.RISK_NEUTRAL:
            return self.r
        if self.b is None:
            raise ConfigurationError("empirical measure requires an empirical drift b")
        return self.b


@dataclass(frozen=True)
class RegimeParams:
    """Two-state Markov-switching market; state 1 is normal, state 2 is stressed.

    ``p`` is the daily probability of moving from the normal to the stressed state and
    ``q`` the daily probability of moving back, so the chain's transition matrix is
    ``[[1 - p, p], [q, 1 - q]]`` and the long-run share of normal days is q / (p + q).
    Drifts and volatilities are annual.
    """

    mu1: float
    mu2: float
    sigma1: float
    sigma2: float
    p: float
    q: float

    def __post_init__(self) -> None:
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise DomainError("regime volatilities must be non-negative")
        for name in ("p", "q"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise DomainError(f"{name} must be a probability, got {val}")

    @property
    def transition_matrix(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return ((1.0 - self.p, self.p), (self.q, 1.0 - self.q))

    def stationary_distribution(self) -> tuple[float, float]:
        total = self.p + self.q
        if total <= 0:
            raise DomainError("stationary distribution undefined for p = q = 0")
        return self.q / total, self.p / total


@dataclass(frozen=True)
class PremiumResult:
    """Upfront premium as a fraction of x0, with Monte Carlo diagnostics when available."""

    m_r: float
    std_error: Optional[float] = None
    n_paths: Optional[int] = None
    breach_fraction: Optional[float] = None

    def __post_init__(self) -> None:
        if self.m_r < 0:
            raise DomainError(f"premium must be non-negative, got {self.m_r}")
        if self.std_error is not None and self.std_error < 0:
            raise DomainError("std_error must be non-negative")

    @property
    def bps(self) -> float:
        return self.m_r / BPS

    def to_dict(self) -> dict:
        return {
            "m_r": self.m_r,
            "m_r_bps": self.bps,
            "std_error": self.std_error,
            "std_error_bps": None if self.std_error is None else self.std_error / BPS,
            "n_paths": self.n_paths,
            "breach_fraction": self.breach_fraction,
        }


class PartyPayoffs(NamedTuple):
    investor: float
    manager: float
    reinsurer: float


def _pos(x: float) -> float:
    return x if x > 0.0 else 0.0


def reinsurer_payoff(
    terms: ContractTerms, x_at_eval: float, tau_plus_theta: float, m_r: float, r: float
) -> float:
    """Reinsurer's position at liquidation: accrued premium less the shortfall below K."""
    if x_at_eval < 0:
        raise DomainError(f"fund value must be non-negative, got {x_at_eval}")
    if tau_plus_theta < 0:
        raise DomainError(f"evaluation time must be non-negative, got {tau_plus_theta}")
    return m_r * math.exp(r * tau_plus_theta) * terms.x0 - _pos(terms.barrier - x_at_eval)


def party_payoffs(
    terms: ContractTerms, x_terminal: float, m_r: float, r: float, t: float
) -> PartyPayoffs:
    """Terminal split of the fund between investor, manager and reinsurer.

    The performance fee is charged above the hurdle (1 + m_m) x0. The investor is made
    whole below x0, the manager covers losses down to K and the reinsurer beyond K.
    """
    if x_terminal < 0:
        raise DomainError(f"fund value must be non-negative, got {x_terminal}")
    x0 = terms.x0
    accrued = m_r * math.exp(r * t)
    perf = terms.alpha_m * _pos(x_terminal - terms.m_m * x0 - x0)
    first_loss = _pos(x0 - x_terminal)
    second_loss = _pos(terms.barrier - x_terminal)

    investor = x_terminal - (terms.m_m + accrued) * x0 - perf + first_loss
    manager = terms.m_m * x0 + perf - first_loss + second_loss
    reinsurer = accrued * x0 - second_loss
    return PartyPayoffs(investor, manager, reinsurer)
