"""Reinsurance premium for the second-loss tranche of first-loss hedge fund structures."""
from .closed_form import (
    HittingLawParams,
    discounted_hitting_factor_v2,
    empirical_moments,
    hitting_density,
    premium_gbm,
    put_component_v1,
)
from .core import (
    ContractTerms,
    GbmParams,
    Measure,
    PremiumResult,
    RegimeParams,
    party_payoffs,
    reinsurer_payoff,
)
from .regime_mc import InitialState, SimConfig, estimate_premium_ms, weighted_premium

__version__ = "0.1.0"

__all__ = [
    "ContractTerms",
    "GbmParams",
    "HittingLawParams",
    "InitialState",
    "Measure",
    "PremiumResult",
    "RegimeParams",
    "SimConfig",
    "discounted_hitting_factor_v2",
    "empirical_moments",
    "estimate_premium_ms",
    "hitting_density",
    "party_payoffs",
    "premium_gbm",
    "put_component_v1",
    "reinsurer_payoff",
    "weighted_premium",
]
