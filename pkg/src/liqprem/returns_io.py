"""CSV ingestion of daily fund series and risk-free rates.

Files have a ``date,value`` header with ISO-8601 dates. Dates must be strictly increasing.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import LiqpremError


class ParseError(LiqpremError, ValueError):
    pass


class AlignmentError(LiqpremError, ValueError):
    pass


class RateLookupError(LiqpremError, LookupError):
    pass


FORMATS = {
    "levels": "levels",
    "level": "levels",
    "prices": "levels",
    "simple": "simple",
    "simple_returns": "simple",
    "log": "log",
    "log_returns": "log",
}


def _as_dates(values) -> np.ndarray:
    return np.asarray(values, dtype="datetime64[D]")


def _check_dates(dates: np.ndarray, what: str) -> None:
    if dates.size > 1 and not np.all(dates[1:] > dates[:-1]):
        bad = int(np.argmin(dates[1:] > dates[:-1])) + 1
        raise ParseError(f"{what}: dates not strictly increasing at position {bad} ({dates[bad]})")


@dataclass(frozen=True)
class ReturnSeries:
    """Daily log-returns; ``dates[i]`` is the day on which ``log_returns[i]`` was earned."""

    dates: np.ndarray
    log_returns: np.ndarray
    source_id: str = ""

    def __post_init__(self) -> None:
        dates = _as_dates(self.dates)
        values = np.asarray(self.log_returns, dtype=float)
        if dates.shape != values.shape or values.ndim != 1:
            raise ParseError("dates and returns must be 1-D arrays of equal length")
        if not np.all(np.isfinite(values)):
            raise ParseError("returns contain non-finite values")
        _check_dates(dates, self.source_id or "returns")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "log_returns", values)

    def __len__(self) -> int:
        return len(self.log_returns)

    def levels(self, base: float = 1.0) -> np.ndarray:
        """Cumulative value after each day, starting from ``base`` before the first return."""
        return base * np.exp(np.cumsum(self.log_returns))

    def window(self, start, end) -> "ReturnSeries":
        """Sub-series with start <= date < end."""
        lo = np.searchsorted(self.dates, np.datetime64(start, "D"), side="left")
        hi = np.searchsorted(self.dates, np.datetime64(end, "D"), side="left")
        return ReturnSeries(self.dates[lo:hi], self.log_returns[lo:hi], self.source_id)

    @classmethod
    def from_levels(cls, dates, levels, source_id: str = "") -> "ReturnSeries":
        lv = np.asarray(levels, dtype=float)
        if lv.size < 2:
            raise ParseError("need at least two levels to form a return")
        if np.any(lv <= 0):
            raise ParseError("levels must be positive")
        return cls(_as_dates(dates)[1:], np.diff(np.log(lv)), source_id)


@dataclass(frozen=True)
class RateSeries:
    """Annual continuously compounded risk-free rates observed on ``dates``."""

    dates: np.ndarray
    annual_rates: np.ndarray

    def __post_init__(self) -> None:
        dates = _as_dates(self.dates)
        rates = np.asarray(self.annual_rates, dtype=float)
        if dates.shape != rates.shape or rates.ndim != 1 or rates.size == 0:
            raise ParseError("rate dates and values must be non-empty 1-D arrays of equal length")
        if not np.all(np.isfinite(rates)):
            raise ParseError("rates contain non-finite values")
        _check_dates(dates, "rates")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "annual_rates", rates)

    @classmethod
    def constant(cls, rate: float, start="1900-01-01") -> "RateSeries":
        return cls(np.array([start], dtype="datetime64[D]"), np.array([rate]))


def rate_at(rates: RateSeries, when) -> float:
    """Last observed rate on or before ``when``."""
    day = np.datetime64(when, "D")
    idx = int(np.searchsorted(rates.dates, day, side="right")) - 1
    if idx < 0:
        raise RateLookupError(f"no rate observed on or before {day} (series starts {rates.dates[0]})")
    return float(rates.annual_rates[idx])


def _read_rows(path: Path) -> tuple[list[date], list[float]]:
    dates: list[date] = []
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        if [h.strip().lower() for h in header[:2]] != ["date", "value"]:
            raise ParseError(f"{path}: expected header 'date,value', got {','.join(header)!r}")
        for row_no, row in enumerate(reader, start=1):
            where = f"{path}: row {row_no} (line {row_no + 1})"
            if not row or all(not cell.strip() for cell in row):
                raise ParseError(f"{where}: empty row")
            if len(row) < 2 or not row[1].strip():
                raise ParseError(f"{where}: missing value")
            try:
                day = date.fromisoformat(row[0].strip())
            except ValueError:
                raise ParseError(f"{where}: malformed date {row[0]!r}") from None
            try:
                val = float(row[1])
            except ValueError:
                raise ParseError(f"{where}: non-numeric value {row[1]!r}") from None
            if not math.isfinite(val):
                raise ParseError(f"{where}: non-finite value {row[1]!r}")
            if dates and day <= dates[-1]:
                raise ParseError(f"{where}: date {day} does not follow {dates[-1]}")
            dates.append(day)
            values.append(val)
    return dates, values


def load_returns(path, format: str = "log", source_id: str | None = None) -> ReturnSeries:
    """Load a ``date,value`` CSV of levels, simple returns or log-returns."""
    path = Path(path)
    kind = FORMATS.get(str(format).strip().lower())
    if kind is None:
        raise ParseError(f"unknown format {format!r}; use levels, simple or log")
    dates, values = _read_rows(path)
    sid = source_id if source_id is not None else path.stem
    if kind == "levels":
        return ReturnSeries.from_levels(dates, values, sid)
    arr = np.asarray(values, dtype=float)
    if kind == "simple":
        if np.any(arr <= -1.0):
            bad = int(np.argmax(arr <= -1.0)) + 1
            raise ParseError(f"{path}: row {bad}: simple return <= -100%")
        arr = np.log1p(arr)
    return ReturnSeries(np.array(dates, dtype="datetime64[D]"), arr, sid)


def load_rates(path) -> RateSeries:
    dates, values = _read_rows(Path(path))
    return RateSeries(np.array(dates, dtype="datetime64[D]"), np.array(values))


def write_series(path, series: ReturnSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "value"])
        for d, v in zip(series.dates, series.log_returns):
            w.writerow([str(d), repr(float(v))])


def equal_weight_buy_and_hold(series: Sequence[ReturnSeries], source_id: str = "portfolio") -> ReturnSeries:
    """Equally weighted buy-and-hold portfolio on the common trading calendar.

    Each index starts with weight 1/n on the first common date and then drifts with its
    own performance. Returns earned on dates missing from other indices still accrue to
    the index's level.
    """
    if len(series) < 2:
        raise AlignmentError("need at least two series for a portfolio")
    common = series[0].dates
    for s in series[1:]:
        common = np.intersect1d(common, s.dates, assume_unique=True)
    if common.size == 0:
        raise AlignmentError("series have no dates in common")

    first = common[0]
    levels = []
    for s in series:
        cum = np.cumsum(s.log_returns)
        start_idx = int(np.searchsorted(s.dates, first, side="left"))
        base = cum[start_idx - 1] if start_idx > 0 else 0.0
        idx = np.searchsorted(s.dates, common, side="left")
        levels.append(np.exp(cum[idx] - base))
    portfolio = np.mean(levels, axis=0)
    log_p = np.log(portfolio)
    rets = np.diff(np.concatenate([[0.0], log_p]))
    return ReturnSeries(common, rets, source_id)
