"""Deterministic synthetic series used as fixtures by the tests and the CLI examples."""
from __future__ import annotations

import math
from datetime import date

import numpy as np

from .core import TRADING_DAYS
from .returns_io import ReturnSeries


def business_days(start: str | date, n: int) -> np.ndarray:
    """``n`` consecutive weekdays starting on or after ``start``."""
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n), roll="forward")


def markov_chain(n: int, p: float, q: float, seed: int, start_state: int = 1) -> np.ndarray:
    """Random two-state chain in {1, 2}; p = P(1 -> 2), q = P(2 -> 1)."""
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    s = np.empty(n, dtype=np.int64)
    s[0] = start_state
    for t in range(1, n):
        if s[t - 1] == 1:
            s[t] = 2 if u[t] < p else 1
        else:
            s[t] = 1 if u[t] < q else 2
    return s


def stratified_chain(n: int, p: float, q: float, seed: int) -> np.ndarray:
    """Two-state path whose sojourn times are stratified geometric quantiles.

    Sojourns in state 1 (2) are the geometric(p) (geometric(q)) quantiles at the midpoints
    of an equal-probability partition, in shuffled order, so realized switching
    frequencies sit at p and q instead of scattering around them.
    """
    rng = np.random.default_rng(seed)
    cycles = int(math.ceil(n / (1.0 / p + 1.0 / q))) + 1
    u = (np.arange(cycles) + 0.5) / cycles

    def sojourns(prob: float) -> np.ndarray:
        return np.maximum(1, np.ceil(np.log1p(-u) / math.log1p(-prob))).astype(int)

    calm = rng.permutation(sojourns(p))
    stress = rng.permutation(sojourns(q))
    parts = []
    for a, b in zip(calm, stress):
        parts.append(np.full(a, 1))
        parts.append(np.full(b, 2))
    return np.concatenate(parts)[:n]


def hmm_returns(
    n: int = 4000,
    p: float = 0.02,
    q: float = 0.08,
    means: tuple[float, float] = (0.001, -0.001),
    sds: tuple[float, float] = (0.003, 0.012),
    seed: int = 11,
    stratified: bool = True,
    start: str = "2003-04-01",
) -> tuple[ReturnSeries, np.ndarray]:
    """Gaussian two-state HMM returns and the generating state path."""
    states = stratified_chain(n, p, q, seed) if stratified else markov_chain(n, p, q, seed)
    rng = np.random.default_rng(seed + 1)
    m = np.asarray(means)[states - 1]
    s = np.asarray(sds)[states - 1]
    x = m + s * rng.standard_normal(n)
    return ReturnSeries(business_days(start, n), x, "synthetic_hmm"), states


def gbm_returns(
    n: int, mu: float, sigma: float, seed: int, start: str = "2003-04-01", source_id: str = "synthetic_gbm"
) -> ReturnSeries:
    """Daily log-returns with annual log-drift ``mu`` and volatility ``sigma``."""
    rng = np.random.default_rng(seed)
    dt = 1.0 / TRADING_DAYS
    x = mu * dt + sigma * math.sqrt(dt) * rng.standard_normal(n)
    return ReturnSeries(business_days(start, n), x, source_id)


def flat_returns(n: int, start: str = "2003-04-01") -> ReturnSeries:
    return ReturnSeries(business_days(start, n), np.zeros(n), "flat")


def crash_returns(
    years_before: int = 2,
    crash_date: str = "2005-09-15",
    drop: float = 0.15,
    after: tuple[float, ...] = (-0.01, 0.02, -0.03),
    start: str = "2003-04-01",
    end: str = "2007-06-29",
    calm_sigma: float = 0.02,
    seed: int = 3,
) -> ReturnSeries:
    """Quiet series with a single log-drop of ``drop`` on ``crash_date``.

    The days following the crash carry the given log-returns so that liquidation values
    for small liquidity windows are known exactly.
    """
    days = np.arange(np.datetime64(start, "D"), np.datetime64(end, "D") + 1)
    days = days[np.is_busday(days)]
    rng = np.random.default_rng(seed)
    x = calm_sigma / math.sqrt(TRADING_DAYS) * rng.standard_normal(days.size)
    k = int(np.searchsorted(days, np.datetime64(crash_date, "D")))
    if days[k] != np.datetime64(crash_date, "D"):
        raise ValueError(f"{crash_date} is not a business day")
    x[k] = -drop
    x[k + 1 : k + 1 + len(after)] = after
    return ReturnSeries(days, x, "synthetic_crash")
