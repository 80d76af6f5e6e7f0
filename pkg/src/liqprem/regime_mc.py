"""Monte Carlo premium under a two-state Markov-switching log-price process.

Paths are generated in fixed-size blocks. Each block draws from two generators keyed on
``(seed, block, stream)``: one for the regime chain and one for the Gaussian shocks. The
output therefore does not depend on how many worker threads process the blocks, and the
antithetic twin of a path reuses its chain and negates only the shocks.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .core import (
    TRADING_DAYS,
    ConfigurationError,
    ContractTerms,
    Measure,
    PremiumResult,
    RegimeParams,
)

BLOCK_SIZE = 8192
_CHAIN_STREAM = 0
_SHOCK_STREAM = 1


class InitialState(str, Enum):
    NORMAL = "normal"
    STRESSED = "stressed"
    STATIONARY = "stationary_draw"

    @classmethod
    def parse(cls, value: "str | InitialState") -> "InitialState":
        if isinstance(value, InitialState):
            return value
        key = str(value).strip().lower()
        aliases = {"good": cls.NORMAL, "1": cls.NORMAL, "2": cls.STRESSED, "stationary": cls.STATIONARY}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown initial state {value!r}") from None


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    steps_per_year: int = TRADING_DAYS
    seed: int = 0
    antithetic: bool = True
    initial_state: InitialState = InitialState.NORMAL
    measure: Measure = Measure.RISK_NEUTRAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "initial_state", InitialState.parse(self.initial_state))
        object.__setattr__(self, "measure", Measure.parse(self.measure))
        if self.n_paths < 1:
            raise ConfigurationError("n_paths must be at least 1")
        if self.antithetic and self.n_paths % 2:
            raise ConfigurationError("antithetic sampling needs an even number of paths")
        if self.steps_per_year < 1:
            raise ConfigurationError("steps_per_year must be at least 1")

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_year


@dataclass(frozen=True)
class PathOutcome:
    breached: bool
    tau_years: Optional[float]
    x_at_eval: Optional[float]
    discounted_shortfall: float


@dataclass(frozen=True)
class _Grid:
    n_horizon: int      # monitoring steps in (0, T]
    theta_full: int     # whole steps of the liquidity window
    theta_frac: float   # trailing partial step, in units of dt

    @property
    def n_steps(self) -> int:
        return self.n_horizon + self.theta_full + (1 if self.theta_frac > 0 else 0)


def _grid(config: SimConfig, terms: ContractTerms) -> _Grid:
    n_horizon = int(round(terms.horizon_years * config.steps_per_year))
    theta_steps = terms.theta_years * config.steps_per_year
    whole = math.floor(theta_steps + 1e-9)
    frac = theta_steps - whole
    if frac < 1e-9:
        frac = 0.0
    return _Grid(n_horizon, int(whole), frac)


def _step_chain(states: np.ndarray, u: np.ndarray, p: float, q: float) -> np.ndarray:
    # states in {0, 1}; 0 leaves with prob p, 1 leaves with prob q
    return np.where(states == 0, u < p, u >= q).astype(np.int8)


def _initial_states(n: int, config: SimConfig, regime: RegimeParams, rng) -> np.ndarray:
    if config.initial_state is InitialState.NORMAL:
        return np.zeros(n, dtype=np.int8)
    if config.initial_state is InitialState.STRESSED:
        return np.ones(n, dtype=np.int8)
    pi_normal, _ = regime.stationary_distribution()
    return (rng.random(n) >= pi_normal).astype(np.int8)


def _chain_block(n: int, n_steps: int, config: SimConfig, regime: RegimeParams, rng) -> np.ndarray:
    """States (0-based) at t_0 ... t_n for ``n`` independent chains."""
    states = np.empty((n, n_steps + 1), dtype=np.int8)
    states[:, 0] = _initial_states(n, config, regime, rng)
    u = rng.random((n, n_steps))
    if n == 1:
        # scalar loop is much faster than per-step array ops for a single long chain
        s, p, q = int(states[0, 0]), regime.p, regime.q
        out = [s]
        for x in u[0].tolist():
            s = (1 if x < p else 0) if s == 0 else (0 if x < q else 1)
            out.append(s)
        states[0] = out
        return states
    for i in range(n_steps):
        states[:, i + 1] = _step_chain(states[:, i], u[:, i], regime.p, regime.q)
    return states


def simulate_chain(config: SimConfig, regime: RegimeParams, n_steps: int) -> np.ndarray:
    """One regime path of length ``n_steps + 1`` (initial state first), valued in {1, 2}."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0, _CHAIN_STREAM)))
    return _chain_block(1, n_steps, config, regime, rng)[0].astype(np.int64) + 1


def _rates(config: SimConfig, regime: RegimeParams, r: float) -> tuple[np.ndarray, np.ndarray]:
    if config.measure is Measure.RISK_NEUTRAL:
        drift = np.array([r, r])
    else:
        drift = np.array([regime.mu1, regime.mu2])
    return drift, np.array([regime.sigma1, regime.sigma2])


def _evaluate(
    states: np.ndarray,
    shocks: np.ndarray,
    config: SimConfig,
    regime: RegimeParams,
    terms: ContractTerms,
    grid: _Grid,
    r: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized breach detection and discounted shortfall, normalized by x0.

    ``states`` has one more column than ``shocks``; the increment over (t_{i-1}, t_i]
    uses the state at t_i.
    """
    dt = config.dt
    drift, vol = _rates(config, regime, r)
    log_drift = (drift - 0.5 * vol**2) * dt
    n_full = grid.n_horizon + grid.theta_full

    s = states[:, 1 : n_full + 1]
    increments = log_drift[s] + vol[s] * math.sqrt(dt) * shocks[:, :n_full]
    log_x = np.cumsum(increments, axis=1)

    log_barrier = math.log(terms.barrier_fraction)
    below = log_x[:, : grid.n_horizon] <= log_barrier
    breached = below.any(axis=1)
    hit = np.argmax(below, axis=1)

    rows = np.arange(len(log_x))
    log_eval = log_x[rows, hit + grid.theta_full]
    if grid.theta_frac > 0:
        col = hit + grid.theta_full + 1
        s_last = states[rows, col + 1]
        h = grid.theta_frac * dt
        log_eval = log_eval + (drift[s_last] - 0.5 * vol[s_last] ** 2) * h + vol[s_last] * math.sqrt(h) * shocks[rows, col]

    tau = (hit + 1) * dt
    x_eval = np.exp(log_eval)
    shortfall = np.maximum(terms.barrier_fraction - x_eval, 0.0)
    discounted = np.where(breached, np.exp(-r * (tau + terms.theta_years)) * shortfall, 0.0)
    return breached, tau, x_eval, discounted


def simulate_path(
    config: SimConfig,
    regime: RegimeParams,
    terms: ContractTerms,
    states: np.ndarray,
    shocks: Optional[np.ndarray] = None,
    r: float = 0.01,
) -> PathOutcome:
    """Single-path outcome for a given regime sequence (values in {1, 2}, t_0 first).

    Shocks are drawn from the configured seed when not supplied.
    """
    grid = _grid(config, terms)
    states = np.asarray(states)
    if states.ndim != 1 or states.size < grid.n_steps + 1:
        raise ConfigurationError(f"need at least {grid.n_steps + 1} states, got {states.size}")
    if shocks is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0, _SHOCK_STREAM)))
        shocks = rng.standard_normal(grid.n_steps)
    shocks = np.asarray(shocks, dtype=float)
    if shocks.size < grid.n_steps:
        raise ConfigurationError(f"need at least {grid.n_steps} shocks, got {shocks.size}")
    zero_based = (states[None, : grid.n_steps + 1] - 1).astype(np.int64)
    breached, tau, x_eval, disc = _evaluate(
        zero_based, shocks[None, : grid.n_steps], config, regime, terms, grid, r
    )
    if not breached[0]:
        return PathOutcome(False, None, None, 0.0)
    return PathOutcome(True, float(tau[0]), float(x_eval[0]) * terms.x0, float(disc[0]))


def _worker_count() -> int:
    raw = os.environ.get("LIQPREM_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"LIQPREM_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigurationError("LIQPREM_THREADS must be non-negative")
    return n if n > 0 else min(8, os.cpu_count() or 1)


def _block_contributions(
    block: int, n_units: int, config: SimConfig, regime: RegimeParams, terms: ContractTerms, grid: _Grid, r: float
) -> tuple[np.ndarray, np.ndarray]:
    chain_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(block, _CHAIN_STREAM)))
    shock_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(block, _SHOCK_STREAM)))
    states = _chain_block(n_units, grid.n_steps, config, regime, chain_rng)
    shocks = shock_rng.standard_normal((n_units, grid.n_steps))
    breached, _, _, disc = _evaluate(states, shocks, config, regime, terms, grid, r)
    if not config.antithetic:
        return disc, breached.astype(np.int64)
    breached_neg, _, _, disc_neg = _evaluate(states, -shocks, config, regime, terms, grid, r)
    return 0.5 * (disc + disc_neg), breached.astype(np.int64) + breached_neg


def path_contributions(
    config: SimConfig, regime: RegimeParams, terms: ContractTerms, r: float = 0.01
) -> tuple[np.ndarray, int]:
    """Per-unit discounted shortfalls (pairs averaged when antithetic) and breach count."""
    grid = _grid(config, terms)
    n_units = config.n_paths // 2 if config.antithetic else config.n_paths
    sizes = [min(BLOCK_SIZE, n_units - start) for start in range(0, n_units, BLOCK_SIZE)]

    def run(block: int):
        return _block_contributions(block, sizes[block], config, regime, terms, grid, r)

    workers = min(_worker_count(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    values = np.concatenate([v for v, _ in parts])
    n_breached = int(sum(int(b.sum()) for _, b in parts))
    return values, n_breached


def terminal_log_prices(
    config: SimConfig, regime: RegimeParams, horizon_years: float = 1.0, r: float = 0.01
) -> np.ndarray:
    """ln(X_T / x0) for ``config.n_paths`` paths (antithetic twins interleaved block-wise)."""
    n_steps = int(round(horizon_years * config.steps_per_year))
    dt = config.dt
    drift, vol = _rates(config, regime, r)
    n_units = config.n_paths // 2 if config.antithetic else config.n_paths
    out = []
    for block, start in enumerate(range(0, n_units, BLOCK_SIZE)):
        n = min(BLOCK_SIZE, n_units - start)
        chain_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(block, _CHAIN_STREAM)))
        shock_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(block, _SHOCK_STREAM)))
        s = _chain_block(n, n_steps, config, regime, chain_rng)[:, 1:]
        shocks = shock_rng.standard_normal((n, n_steps))
        base = ((drift - 0.5 * vol**2) * dt)[s].sum(axis=1)
        noise = (vol[s] * math.sqrt(dt) * shocks).sum(axis=1)
        out.append(base + noise)
        if config.antithetic:
            out.append(base - noise)
    return np.concatenate(out)


def estimate_premium_ms(
    config: SimConfig, regime: RegimeParams, terms: ContractTerms, r: float = 0.01
) -> PremiumResult:
    """Premium as the mean discounted shortfall at liquidation across simulated paths."""
    values, n_breached = path_contributions(config, regime, terms, r)
    n = values.size
    mean = math.fsum(values.tolist()) / n
    if n > 1:
        var = math.fsum(((values - mean) ** 2).tolist()) / (n - 1)
        std_error = math.sqrt(var / n)
    else:
        std_error = 0.0
    return PremiumResult(
        m_r=max(mean, 0.0),
        std_error=std_error,
        n_paths=config.n_paths,
        breach_fraction=n_breached / config.n_paths,
    )


def weighted_premium(good: PremiumResult, stressed: PremiumResult, w_good: float) -> PremiumResult:
    """Mix of the premiums started from the normal and from the stressed state."""
    if not 0.0 <= w_good <= 1.0:
        raise ConfigurationError(f"w_good must lie in [0, 1], got {w_good}")
    w_bad = 1.0 - w_good
    se = None
    if good.std_error is not None and stressed.std_error is not None:
        se = math.hypot(w_good * good.std_error, w_bad * stressed.std_error)
    breach = None
    if good.breach_fraction is not None and stressed.breach_fraction is not None:
        breach = w_good * good.breach_fraction + w_bad * stressed.breach_fraction
    n = None
    if good.n_paths is not None and stressed.n_paths is not None:
        n = good.n_paths + stressed.n_paths
    return PremiumResult(
        m_r=w_good * good.m_r + w_bad * stressed.m_r,
        std_error=se,
        n_paths=n,
        breach_fraction=breach,
    )
