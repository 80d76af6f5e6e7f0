"""Rolling-window historical backtest of the reinsured first-loss structure.

Each year a one-year contract is priced from the trailing estimation window, the fund is
marked daily along the historical path, and either a barrier breach (followed by
liquidation after the liquidity window) ends the run or the period settles and the
investor's terminal value rolls into the next period. Premiums and fees go to riskless
side accounts that compound at the rate observed at the start of each period.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import date, timedelta
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .closed_form import empirical_moments, premium_gbm
from .core import (
    TRADING_DAYS,
    ConfigurationError,
    ContractTerms,
    GbmParams,
    LiqpremError,
    Measure,
    RegimeParams,
)
from .hmm import baum_welch, forward_backward
from .regime_mc import InitialState, SimConfig, estimate_premium_ms
from .returns_io import RateSeries, ReturnSeries, rate_at

_SETTLE_TOL = 1e-12


class TruncationError(LiqpremError, ValueError):
    """The liquidation date falls beyond the end of the historical data."""


class LedgerInvariantError(LiqpremError, AssertionError):
    pass


class Pricer(str, Enum):
    GBM = "gbm_closed_form"
    MS = "markov_switching_mc"

    @classmethod
    def parse(cls, value: "str | Pricer") -> "Pricer":
        if isinstance(value, Pricer):
            return value
        key = str(value).strip().lower().replace("-", "_")
        if key in ("gbm", "closed_form"):
            return cls.GBM
        if key in ("ms", "markov_switching", "regime"):
            return cls.MS
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown pricer {value!r}") from None


@dataclass(frozen=True)
class BacktestConfig:
    pricer: Pricer = Pricer.GBM
    theta_days: float = 1.0
    c_m: float = 0.1
    alpha_m: float = 0.5
    m_m: float = 0.0
    window_years: int = 2
    period_start_month_day: tuple[int, int] = (4, 1)
    max_periods: int = 13
    start_date: Optional[date] = None
    x0: float = 1.0
    sim: SimConfig = field(default_factory=lambda: SimConfig(n_paths=20_000, seed=0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "pricer", Pricer.parse(self.pricer))
        if self.window_years <= 0:
            raise ConfigurationError("window_years must be positive")
        if self.theta_days < 0:
            raise ConfigurationError("theta_days must be non-negative")
        if self.max_periods < 1:
            raise ConfigurationError("max_periods must be at least 1")
        # validates c_m, alpha_m, m_m and x0
        ContractTerms(x0=self.x0, c_m=self.c_m, alpha_m=self.alpha_m, m_m=self.m_m, theta_days=self.theta_days)


class Settlement(NamedTuple):
    investor: float
    manager: float
    reinsurer: float


def settle_period(
    x_start: float,
    x_end: float,
    manager_start: float,
    reinsurer_start: float,
    m_r: float,
    r: float,
    t: float,
    c_m: float,
    alpha_m: float,
    m_m: float = 0.0,
) -> Settlement:
    """End-of-period (or liquidation) values of the three parties.

    ``manager_start`` and ``reinsurer_start`` are the side-account balances after the
    upfront premium has been credited; ``t`` is one year for a full period and tau + theta
    after a breach.
    """
    growth = math.exp(r * t)
    perf = alpha_m * max(x_end - m_m * x_start - x_start, 0.0)
    first_loss = max(x_start - x_end, 0.0)
    second_loss = max((1.0 - c_m) * x_start - x_end, 0.0)
    investor = x_end - m_r * growth * x_start - m_m * x_start - perf + first_loss
    manager = growth * manager_start + m_m * x_start + perf - first_loss + second_loss
    reinsurer = growth * reinsurer_start - second_loss
    return Settlement(investor, manager, reinsurer)


@dataclass
class PeriodRecord:
    index: int
    start_date: str
    end_date: str
    rate: float
    m_r: float
    investor_start: float
    manager_start: float
    reinsurer_start: float
    fund_end: float
    performance_fee: float
    breach: bool
    breach_date: Optional[str]
    liquidation_date: Optional[str]
    investor_end: float
    manager_end: float
    reinsurer_end: float
    sigma: Optional[float] = None
    regime: Optional[dict] = None
    initial_state: Optional[str] = None
    premium_std_error: Optional[float] = None


@dataclass
class BacktestLedger:
    dates: np.ndarray
    fund: np.ndarray
    investor: np.ndarray
    manager: np.ndarray
    reinsurer: np.ndarray
    regime_estimate: np.ndarray
    premium: np.ndarray
    periods: list[PeriodRecord]
    source_id: str = ""
    config: Optional[BacktestConfig] = None

    @property
    def breached(self) -> bool:
        return any(p.breach for p in self.periods)

    @property
    def breach_date(self) -> Optional[str]:
        for p in self.periods:
            if p.breach:
                return p.breach_date
        return None

    def summary(self) -> dict:
        last = self.periods[-1] if self.periods else None
        cfg = self.config
        return {
            "source_id": self.source_id,
            "pricer": cfg.pricer.value if cfg else None,
            "theta_days": cfg.theta_days if cfg else None,
            "c_m": cfg.c_m if cfg else None,
            "alpha_m": cfg.alpha_m if cfg else None,
            "m_m": cfg.m_m if cfg else None,
            "n_periods": len(self.periods),
            "n_breaches": sum(p.breach for p in self.periods),
            "breach_date": self.breach_date,
            "liquidation_date": next((p.liquidation_date for p in self.periods if p.breach), None),
            "final": None
            if last is None
            else {"investor": last.investor_end, "manager": last.manager_end, "reinsurer": last.reinsurer_end},
            "periods": [asdict(p) for p in self.periods],
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "fund", "investor", "manager", "reinsurer", "regime_estimate", "premium"])
            for i in range(len(self.dates)):
                reg = int(self.regime_estimate[i])
                w.writerow(
                    [
                        str(self.dates[i]),
                        repr(float(self.fund[i])),
                        repr(float(self.investor[i])),
                        repr(float(self.manager[i])),
                        repr(float(self.reinsurer[i])),
                        reg if reg else "",
                        repr(float(self.premium[i])),
                    ]
                )

    def write_summary(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _shift_years(day: date, years: int) -> date:
    try:
        return day.replace(year=day.year + years)
    except ValueError:  # 29 February
        return day.replace(year=day.year + years, day=28)


def _default_start(first: date, config: BacktestConfig) -> date:
    month, day = config.period_start_month_day
    earliest = _shift_years(first, config.window_years) - timedelta(days=7)
    candidate = date(earliest.year, month, day)
    if candidate < earliest:
        candidate = date(earliest.year + 1, month, day)
    return candidate


def _to_date(d) -> date:
    return date.fromisoformat(str(np.datetime64(d, "D")))


def _price_period(config: BacktestConfig, window: ReturnSeries, terms: ContractTerms, r: float, index: int):
    """Premium fraction for one period plus pricing diagnostics."""
    if config.pricer is Pricer.GBM:
        sigma = empirical_moments(window).sigma_emp
        if sigma <= 0:
            return 0.0, {"sigma": 0.0}
        res = premium_gbm(terms, GbmParams(r=r, sigma=sigma), Measure.RISK_NEUTRAL)
        return res.m_r, {"sigma": sigma}

    fit = baum_welch(window)
    last_state = int(fit.decoded_states[-1])
    init = InitialState.NORMAL if last_state == 1 else InitialState.STRESSED
    sim = replace(config.sim, initial_state=init, measure=Measure.RISK_NEUTRAL, seed=config.sim.seed + index)
    res = estimate_premium_ms(sim, fit.regime, terms, r=r)
    return res.m_r, {"regime": asdict(fit.regime), "initial_state": init.value, "fit": fit, "std_error": res.std_error}


def _filtered_states(fit, window: ReturnSeries, period_returns: np.ndarray) -> np.ndarray:
    joined = np.concatenate([window.log_returns, period_returns])
    alpha = forward_backward(joined, fit.params)[0]
    return np.argmax(alpha[len(window) :], axis=1) + 1


def run_backtest(config: BacktestConfig, returns: ReturnSeries, rates: RateSeries) -> BacktestLedger:
    """Chain one-year contracts along the historical series until a breach or data runs out."""
    if len(returns) == 0:
        raise ConfigurationError("empty return series")
    dates = returns.dates
    log_level = np.cumsum(returns.log_returns)
    first_day = _to_date(dates[0])
    last_day = _to_date(dates[-1])
    start = config.start_date or _default_start(first_day, config)
    window_start = _shift_years(start, -config.window_years)
    if first_day > window_start + timedelta(days=7):
        raise ConfigurationError(
            f"insufficient history: estimation window starts {window_start}, data starts {first_day}"
        )

    x_inv, x_man, x_re = config.x0, 0.0, 0.0
    rows: dict[str, list] = {k: [] for k in ("date", "fund", "inv", "man", "re", "reg", "prem")}
    periods: list[PeriodRecord] = []

    for i in range(config.max_periods):
        p_start = _shift_years(start, i)
        p_next = _shift_years(start, i + 1)
        complete = last_day >= p_next - timedelta(days=5)
        lo = int(np.searchsorted(dates, np.datetime64(p_start, "D"), side="left"))
        hi = int(np.searchsorted(dates, np.datetime64(p_next, "D"), side="left"))
        if hi <= lo:
            break
        barrier = (1.0 - config.c_m) * x_inv
        base = log_level[lo - 1] if lo > 0 else 0.0
        fund = x_inv * np.exp(log_level[lo:hi] - base)
        hit = np.flatnonzero(fund <= barrier)
        # a period the data does not cover is only run when it already contains a breach
        if not complete and hit.size == 0:
            break
        window = returns.window(_shift_years(p_start, -config.window_years), p_start)
        if len(window) < 2:
            raise ConfigurationError(f"period {i}: estimation window has {len(window)} returns")

        r = rate_at(rates, p_start)
        terms = ContractTerms(
            x0=x_inv, c_m=config.c_m, alpha_m=config.alpha_m, m_m=config.m_m, horizon_years=1.0,
            theta_days=config.theta_days,
        )
        m_r, info = _price_period(config, window, terms, r, i)

        v_man = x_man
        v_re = x_re + m_r * x_inv

        breach = hit.size > 0
        if breach:
            k_hit = lo + int(hit[0])
            whole = math.floor(config.theta_days + 1e-9)
            frac = config.theta_days - whole
            if frac < 1e-9:
                frac = 0.0
            k_eval = k_hit + whole
            k_need = k_eval + (1 if frac > 0 else 0)
            if k_need >= len(dates):
                raise TruncationError(
                    f"breach on {dates[k_hit]} needs {k_need - len(dates) + 1} more trading day(s) "
                    f"after {dates[-1]} to reach liquidation"
                )
            log_eval = log_level[k_eval] + (frac * (log_level[k_eval + 1] - log_level[k_eval]) if frac else 0.0)
            x_end = x_inv * math.exp(log_eval - base)
            t_settle = (k_hit - lo + 1) / TRADING_DAYS + config.theta_days / TRADING_DAYS
            k_last = k_need
        else:
            k_last = hi - 1
            x_end = float(fund[-1])
            t_settle = 1.0

        day_idx = np.arange(lo, k_last + 1)
        t_days = (day_idx - lo + 1) / TRADING_DAYS
        x_path = x_inv * np.exp(log_level[day_idx] - base)
        growth = np.exp(r * t_days)
        perf = config.alpha_m * np.maximum(x_path - config.m_m * x_inv - x_inv, 0.0)
        first_loss = np.maximum(x_inv - x_path, 0.0)
        second_loss = np.maximum(barrier - x_path, 0.0)
        inv_mark = x_path - (m_r * growth + config.m_m) * x_inv - perf + first_loss
        floor = (1.0 - config.m_m - m_r * growth) * x_inv
        man_mark = growth * v_man + config.m_m * x_inv + perf - first_loss + second_loss
        re_mark = growth * v_re - second_loss

        settled = settle_period(x_inv, x_end, v_man, v_re, m_r, r, t_settle, config.c_m, config.alpha_m, config.m_m)
        _check_period(i, x_inv, x_end, v_man, v_re, m_r, r, t_settle, config, settled, inv_mark, floor)
        inv_mark = np.maximum(inv_mark, floor)

        if config.pricer is Pricer.MS:
            regimes = _filtered_states(info["fit"], window, returns.log_returns[lo : k_last + 1])
        else:
            regimes = np.zeros(len(day_idx), dtype=np.int64)

        rows["date"].append(dates[day_idx])
        rows["fund"].append(x_path)
        rows["inv"].append(inv_mark)
        rows["man"].append(man_mark)
        rows["re"].append(re_mark)
        rows["reg"].append(regimes)
        rows["prem"].append(np.full(len(day_idx), m_r))

        periods.append(
            PeriodRecord(
                index=i,
                start_date=str(dates[lo]),
                end_date=str(dates[k_last]),
                rate=r,
                m_r=m_r,
                investor_start=x_inv,
                manager_start=v_man,
                reinsurer_start=v_re,
                fund_end=x_end,
                performance_fee=config.alpha_m * max(x_end - config.m_m * x_inv - x_inv, 0.0),
                breach=breach,
                breach_date=str(dates[k_hit]) if breach else None,
                liquidation_date=str(dates[k_last]) if breach else None,
                investor_end=settled.investor,
                manager_end=settled.manager,
                reinsurer_end=settled.reinsurer,
                sigma=info.get("sigma"),
                regime=info.get("regime"),
                initial_state=info.get("initial_state"),
                premium_std_error=info.get("std_error"),
            )
        )
        if breach:
            break
        x_inv, x_man, x_re = settled

    if not periods:
        raise ConfigurationError(f"no complete period between {start} and {last_day}")

    def cat(key, dtype=float):
        return np.concatenate(rows[key]).astype(dtype)

    return BacktestLedger(
        dates=cat("date", "datetime64[D]"),
        fund=cat("fund"),
        investor=cat("inv"),
        manager=cat("man"),
        reinsurer=cat("re"),
        regime_estimate=cat("reg", np.int64),
        premium=cat("prem"),
        periods=periods,
        source_id=returns.source_id,
        config=config,
    )


def _check_period(i, x_inv, x_end, v_man, v_re, m_r, r, t, config, settled, inv_mark, floor) -> None:
    total = settled.investor + settled.manager + settled.reinsurer
    expected = x_end + math.exp(r * t) * (v_man + v_re - m_r * x_inv)
    if abs(total - expected) > _SETTLE_TOL * max(1.0, abs(expected)):
        raise LedgerInvariantError(f"period {i}: settlement does not conserve value ({total} vs {expected})")
    if np.any(inv_mark < floor - _SETTLE_TOL * max(1.0, x_inv)):
        raise LedgerInvariantError(f"period {i}: investor value fell below the period floor")
    transfer = -max(x_inv - x_end, 0.0) + max((1.0 - config.c_m) * x_inv - x_end, 0.0)
    if transfer < -config.c_m * x_inv - _SETTLE_TOL * max(1.0, x_inv):
        raise LedgerInvariantError(f"period {i}: manager loss exceeds the deposit cap")
