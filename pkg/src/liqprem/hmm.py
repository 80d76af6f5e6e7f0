"""Two-state Gaussian HMM calibration of daily log-returns.

Pipeline: rolling-volatility labeling for starting values, Baum-Welch EM in scaled
forward-backward form, Viterbi decoding, and annualization to ``RegimeParams``. States are
relabeled after fitting so that state 1 is always the calmer one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    TRADING_DAYS,
    DomainError,
    EstimationError,
    InsufficientDataError,
    RegimeParams,
)

VARIANCE_FLOOR = 1e-8
MIN_OBSERVATIONS = 50
_LOG_2PI = math.log(2.0 * math.pi)


def _values(returns) -> np.ndarray:
    arr = np.asarray(getattr(returns, "log_returns", returns), dtype=float)
    if arr.ndim != 1:
        raise DomainError("returns must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise DomainError("returns contain non-finite values")
    return arr


@dataclass(frozen=True)
class HmmParams:
    """Daily-scale HMM parameters; index 0 is state 1 (normal)."""

    means: np.ndarray
    sds: np.ndarray
    transition: np.ndarray
    initial: np.ndarray

    @property
    def p(self) -> float:
        return float(self.transition[0, 1])

    @property
    def q(self) -> float:
        return float(self.transition[1, 0])


@dataclass(frozen=True)
class HmmInit:
    params: HmmParams
    labels: np.ndarray
    used_fallback: bool


@dataclass(frozen=True)
class HmmFitResult:
    regime: RegimeParams
    daily_means: np.ndarray
    daily_sds: np.ndarray
    log_likelihood: float
    n_iterations: int
    converged: bool
    decoded_states: np.ndarray
    transition: np.ndarray
    initial: np.ndarray
    history: tuple = field(default=(), repr=False)

    @property
    def params(self) -> HmmParams:
        return HmmParams(self.daily_means, self.daily_sds, self.transition, self.initial)


def _params_from_labels(x: np.ndarray, stressed: np.ndarray) -> HmmParams:
    labels = stressed.astype(int)
    means = np.array([x[labels == k].mean() for k in (0, 1)])
    sds = np.array([max(x[labels == k].std(ddof=0), math.sqrt(VARIANCE_FLOOR)) for k in (0, 1)])
    prev, nxt = labels[:-1], labels[1:]
    floor = 1.0 / len(x)
    trans = np.empty((2, 2))
    for k in (0, 1):
        from_k = prev == k
        n_from = int(from_k.sum())
        leave = float(np.sum(nxt[from_k] != k)) / n_from if n_from else 0.5
        leave = min(max(leave, floor), 1.0 - floor)
        trans[k, 1 - k] = leave
        trans[k, k] = 1.0 - leave
    initial = np.array([0.5, 0.5])
    return HmmParams(means, sds, trans, initial)


def init_heuristic(returns, window_days: int = 21, vol_multiplier: float = 1.5) -> HmmInit:
    """Starting values from a rolling-volatility crisis labeling.

    A day is stressed when the centered rolling standard deviation exceeds
    ``vol_multiplier`` times the full-sample one. When that leaves fewer than two days in
    either state, the top quintile of absolute returns is labeled stressed instead.
    """
    x = _values(returns)
    if window_days < 2:
        raise DomainError("window_days must be at least 2")
    if len(x) <= window_days:
        raise InsufficientDataError(f"need more than {window_days} returns, got {len(x)}")

    windows = np.lib.stride_tricks.sliding_window_view(x, window_days)
    rolling = windows.std(axis=1, ddof=1)
    # center each window on the day it labels; pad the edges with the nearest window
    lead = (window_days - 1) // 2
    vol = np.empty(len(x))
    vol[lead : lead + len(rolling)] = rolling
    vol[:lead] = rolling[0]
    vol[lead + len(rolling) :] = rolling[-1]

    stressed = vol > vol_multiplier * x.std(ddof=1)
    fallback = stressed.sum() < 2 or (~stressed).sum() < 2
    if fallback:
        magnitude = np.abs(x - x.mean())
        stressed = magnitude >= np.quantile(magnitude, 0.8)
    return HmmInit(_params_from_labels(x, stressed), stressed.astype(np.int64) + 1, bool(fallback))


def _log_emissions(x: np.ndarray, means: np.ndarray, sds: np.ndarray) -> np.ndarray:
    z = (x[:, None] - means[None, :]) / sds[None, :]
    return -0.5 * z * z - np.log(sds)[None, :] - 0.5 * _LOG_2PI


def forward_backward(x, params: HmmParams) -> tuple[np.ndarray, np.ndarray, float, np.ndarray]:
    """Scaled forward-backward pass.

    Returns the normalized forward probabilities, state posteriors, the log-likelihood and
    the summed pairwise posteriors (expected transition counts).
    """
    x = _values(x)
    n = len(x)
    with np.errstate(over="ignore", invalid="ignore"):
        log_b = _log_emissions(x, params.means, params.sds)
    shift = log_b.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(shift)):
        raise EstimationError("emission densities underflow for every state")
    b = np.exp(log_b - shift)
    A = params.transition

    alpha = np.empty((n, 2))
    scale = np.empty(n)
    a0, a1 = params.initial[0] * b[0, 0], params.initial[1] * b[0, 1]
    c = a0 + a1
    alpha[0] = a0 / c, a1 / c
    scale[0] = c
    A00, A01, A10, A11 = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
    bl = b.tolist()
    prev0, prev1 = alpha[0]
    for t in range(1, n):
        b0, b1 = bl[t]
        a0 = (prev0 * A00 + prev1 * A10) * b0
        a1 = (prev0 * A01 + prev1 * A11) * b1
        c = a0 + a1
        prev0, prev1 = a0 / c, a1 / c
        alpha[t] = prev0, prev1
        scale[t] = c
    if not np.all(scale > 0) or not np.all(np.isfinite(scale)):
        raise EstimationError("forward pass produced a degenerate likelihood")
    log_lik = float(np.log(scale).sum() + shift.sum())

    beta = np.empty((n, 2))
    beta[-1] = 1.0
    xi = np.zeros((2, 2))
    nxt0, nxt1 = 1.0, 1.0
    al = alpha.tolist()
    sl = scale.tolist()
    for t in range(n - 2, -1, -1):
        b0, b1 = bl[t + 1]
        w0, w1 = b0 * nxt0, b1 * nxt1
        c = sl[t + 1]
        f0, f1 = al[t]
        xi[0, 0] += f0 * A00 * w0 / c
        xi[0, 1] += f0 * A01 * w1 / c
        xi[1, 0] += f1 * A10 * w0 / c
        xi[1, 1] += f1 * A11 * w1 / c
        nxt0 = (A00 * w0 + A01 * w1) / c
        nxt1 = (A10 * w0 + A11 * w1) / c
        beta[t] = nxt0, nxt1
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    return alpha, gamma, log_lik, xi


def log_likelihood(x, params: HmmParams) -> float:
    return forward_backward(x, params)[2]


def _m_step(x: np.ndarray, gamma: np.ndarray, xi: np.ndarray) -> HmmParams:
    weights = gamma.sum(axis=0)
    if np.any(weights <= 0):
        raise EstimationError("a state received zero posterior weight")
    means = (gamma * x[:, None]).sum(axis=0) / weights
    var = (gamma * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / weights
    sds = np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    trans = xi / xi.sum(axis=1, keepdims=True)
    return HmmParams(means, sds, trans, gamma[0].copy())


def _relabel(params: HmmParams) -> tuple[HmmParams, bool]:
    if params.sds[0] <= params.sds[1]:
        return params, False
    order = [1, 0]
    return (
        HmmParams(
            params.means[order],
            params.sds[order],
            params.transition[np.ix_(order, order)],
            params.initial[order],
        ),
        True,
    )


def _run_em(x: np.ndarray, params: HmmParams, max_iter: int, tol: float):
    history = []
    _, gamma, ll, xi = forward_backward(x, params)
    history.append(ll)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        params = _m_step(x, gamma, xi)
        _, gamma, new_ll, xi = forward_backward(x, params)
        if not math.isfinite(new_ll):
            raise EstimationError("non-finite log-likelihood")
        history.append(new_ll)
        gain = new_ll - ll
        ll = new_ll
        if gain < tol:
            converged = True
            break
    return params, ll, it, converged, history


def baum_welch(
    returns,
    init: Optional[HmmInit | HmmParams] = None,
    max_iter: int = 500,
    tol: float = 1e-8,
) -> HmmFitResult:
    """Maximum-likelihood fit of a two-state Gaussian HMM by expectation-maximization."""
    x = _values(returns)
    if len(x) < MIN_OBSERVATIONS:
        raise InsufficientDataError(f"need at least {MIN_OBSERVATIONS} returns, got {len(x)}")
    if init is None:
        init = init_heuristic(x)
    start = init.params if isinstance(init, HmmInit) else init

    try:
        params, ll, n_iter, converged, history = _run_em(x, start, max_iter, tol)
    except (EstimationError, FloatingPointError):
        floored = HmmParams(
            start.means.copy(),
            np.maximum(start.sds, 10.0 * math.sqrt(VARIANCE_FLOOR)),
            np.clip(start.transition, 1e-6, 1.0 - 1e-6),
            np.array([0.5, 0.5]),
        )
        floored.transition[:] = floored.transition / floored.transition.sum(axis=1, keepdims=True)
        try:
            params, ll, n_iter, converged, history = _run_em(x, floored, max_iter, tol)
        except (EstimationError, FloatingPointError) as exc:
            raise EstimationError(f"Baum-Welch failed after variance-floor retry: {exc}") from exc

    params, _ = _relabel(params)
    states = viterbi(x, params)
    return HmmFitResult(
        regime=_annualize(params.means, params.sds, params.p, params.q),
        daily_means=params.means,
        daily_sds=params.sds,
        log_likelihood=ll,
        n_iterations=n_iter,
        converged=converged,
        decoded_states=states,
        transition=params.transition,
        initial=params.initial,
        history=tuple(history),
    )


def viterbi(returns, fit: HmmFitResult | HmmParams) -> np.ndarray:
    """Most likely state path, valued in {1, 2}."""
    x = _values(returns)
    params = fit.params if isinstance(fit, HmmFitResult) else fit
    n = len(x)
    with np.errstate(divide="ignore"):
        log_a = np.log(params.transition)
        log_init = np.log(params.initial)
    log_b = _log_emissions(x, params.means, params.sds)
    back = np.empty((n, 2), dtype=np.int8)
    score = log_init + log_b[0]
    back[0] = 0
    for t in range(1, n):
        cand = score[:, None] + log_a
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], [0, 1]] + log_b[t]
    path = np.empty(n, dtype=np.int64)
    path[-1] = int(np.argmax(score))
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path + 1


def _annualize(means, sds, p: float, q: float) -> RegimeParams:
    sig = np.sqrt(TRADING_DAYS) * np.asarray(sds, dtype=float)
    mu = TRADING_DAYS * np.asarray(means, dtype=float) + 0.5 * sig**2
    return RegimeParams(
        mu1=float(mu[0]), mu2=float(mu[1]), sigma1=float(sig[0]), sigma2=float(sig[1]),
        p=float(p), q=float(q),
    )


def annualize(fit: HmmFitResult) -> RegimeParams:
    """Annual arithmetic drifts and volatilities; p and q stay daily."""
    return _annualize(fit.daily_means, fit.daily_sds, fit.transition[0, 1], fit.transition[1, 0])


def stationary_distribution(regime: RegimeParams) -> tuple[float, float]:
    return regime.stationary_distribution()


def crisis_spans(states, dates=None) -> list[tuple]:
    """Maximal runs of the stressed state as inclusive (start, end) pairs of dates or indices."""
    s = np.asarray(states)
    spans = []
    start = None
    for i, v in enumerate(s):
        if v == 2 and start is None:
            start = i
        elif v != 2 and start is not None:
            spans.append((start, i - 1))
            start = None
    if start is not None:
        spans.append((start, len(s) - 1))
    if dates is None:
        return spans
    return [(dates[a], dates[b]) for a, b in spans]
