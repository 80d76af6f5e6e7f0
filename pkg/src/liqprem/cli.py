"""Command-line front end.

Subcommands: price-gbm, price-ms, fit-hmm, sweep, backtest. JSON goes to stdout (or a
file where noted); tables and CSV are plot-ready. Exit codes: 0 success, 2 usage error,
3 computation error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from datetime import date
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .backtest import BacktestConfig, Pricer, run_backtest
from .closed_form import discounted_hitting_factor_v2, premium_gbm, put_component_v1
from .core import BPS, ConfigurationError, ContractTerms, DomainError, GbmParams, LiqpremError, Measure, RegimeParams
from .hmm import baum_welch, crisis_spans, init_heuristic
from .regime_mc import InitialState, SimConfig, estimate_premium_ms, weighted_premium
from .returns_io import RateSeries, equal_weight_buy_and_hold, load_rates, load_returns

EXIT_USAGE = 2
EXIT_COMPUTE = 3


class UsageError(Exception):
    pass


def _dump(obj, stream=None) -> None:
    stream = stream or sys.stdout
    json.dump(obj, stream, indent=2, sort_keys=True)
    stream.write("\n")


def _contract_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("contract")
    g.add_argument("--theta-days", type=float, default=1.0, help="liquidity window in trading days")
    g.add_argument("--c-m", type=float, default=0.1, help="managerial deposit fraction")
    g.add_argument("--horizon", "-T", type=float, default=1.0, help="investment horizon in years")
    g.add_argument("--x0", type=float, default=1.0)
    g.add_argument("--r", type=float, default=0.01, help="risk-free rate (annual, continuous)")


def _terms(args) -> ContractTerms:
    return ContractTerms(x0=args.x0, c_m=args.c_m, horizon_years=args.horizon, theta_days=args.theta_days)


def _measure(args) -> Measure:
    return Measure.parse(args.measure)


def _gbm_params(args, sigma: Optional[float] = None) -> GbmParams:
    sigma = args.sigma if sigma is None else sigma
    measure = _measure(args)
    b = None
    if measure is Measure.EMPIRICAL:
        if args.drift is not None:
            b = args.drift
        elif args.mu_emp is not None:
            b = args.mu_emp + 0.5 * sigma**2
        else:
            raise UsageError("--measure empirical requires --drift or --mu-emp")
    return GbmParams(r=args.r, sigma=sigma, b=b)


def _price_gbm(args, sigma: Optional[float] = None, theta: Optional[float] = None) -> dict:
    terms = _terms(args)
    if theta is not None:
        terms = ContractTerms(x0=terms.x0, c_m=terms.c_m, horizon_years=terms.horizon_years, theta_days=theta)
    params = _gbm_params(args, sigma)
    measure = _measure(args)
    res = premium_gbm(terms, params, measure)
    b = params.b if measure is Measure.EMPIRICAL else None
    out = res.to_dict()
    out.update(
        v1=put_component_v1(terms.theta_years, terms.barrier, params.r, params.sigma, measure, b),
        v2=discounted_hitting_factor_v2(terms.horizon_years, terms.barrier, terms.x0, params.r, params.sigma, measure, b),
        measure=measure.value,
        inputs={"sigma": params.sigma, "r": params.r, "b": params.b, **asdict(terms)},
    )
    return out


def cmd_price_gbm(args) -> int:
    _dump(_price_gbm(args))
    return 0


def _regime(args, sigma1: Optional[float] = None) -> RegimeParams:
    return RegimeParams(
        mu1=args.mu1, mu2=args.mu2,
        sigma1=args.sigma1 if sigma1 is None else sigma1, sigma2=args.sigma2,
        p=args.p, q=args.q,
    )


def _sim(args, initial_state=None) -> SimConfig:
    return SimConfig(
        n_paths=args.n_paths,
        seed=args.seed,
        antithetic=not args.no_antithetic,
        initial_state=initial_state or args.initial_state,
        measure=_measure(args),
    )


def _price_ms(args, sigma1: Optional[float] = None, theta: Optional[float] = None) -> dict:
    if not args.no_antithetic and args.n_paths % 2:
        raise UsageError("--n-paths must be even with antithetic sampling")
    terms = _terms(args)
    if theta is not None:
        terms = ContractTerms(x0=terms.x0, c_m=terms.c_m, horizon_years=terms.horizon_years, theta_days=theta)
    regime = _regime(args, sigma1)
    if args.weight_good is not None:
        good = estimate_premium_ms(_sim(args, InitialState.NORMAL), regime, terms, r=args.r)
        bad = estimate_premium_ms(_sim(args, InitialState.STRESSED), regime, terms, r=args.r)
        res = weighted_premium(good, bad, args.weight_good)
        out = res.to_dict()
        out["components"] = {"good": good.to_dict(), "stressed": bad.to_dict(), "weight_good": args.weight_good}
        initial = "weighted"
    else:
        sim = _sim(args)
        res = estimate_premium_ms(sim, regime, terms, r=args.r)
        out = res.to_dict()
        initial = sim.initial_state.value
    out.update(
        measure=_measure(args).value,
        initial_state=initial,
        seed=args.seed,
        antithetic=not args.no_antithetic,
        inputs={"r": args.r, **asdict(regime), **asdict(terms)},
    )
    return out


def cmd_price_ms(args) -> int:
    _dump(_price_ms(args))
    return 0


def cmd_fit_hmm(args) -> int:
    series = load_returns(args.input, args.format)
    init = init_heuristic(series, args.window, args.multiplier)
    fit = baum_welch(series, init, max_iter=args.max_iter, tol=args.tol)
    pi = fit.regime.stationary_distribution()
    spans = crisis_spans(fit.decoded_states, [str(d) for d in series.dates])
    s1, s2 = fit.regime.sigma1, fit.regime.sigma2
    out = {
        "source_id": series.source_id,
        "n_observations": len(series),
        "regime": asdict(fit.regime),
        "daily_means": fit.daily_means.tolist(),
        "daily_sds": fit.daily_sds.tolist(),
        "stationary_distribution": list(pi),
        "share_normal_decoded": float(np.mean(fit.decoded_states == 1)),
        "log_likelihood": fit.log_likelihood,
        "n_iterations": fit.n_iterations,
        "converged": fit.converged,
        "init_fallback": init.used_fallback,
        "single_regime_like": bool(abs(s2 - s1) <= 0.15 * max(s1, s2)),
        "crisis_spans": [list(s) for s in spans],
    }
    _dump(out)
    if args.states_out:
        with open(args.states_out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "state"])
            for d, s in zip(series.dates, fit.decoded_states):
                w.writerow([str(d), int(s)])
    return 0


def _parse_grid(args) -> list[float]:
    if args.grid:
        grid = [float(v) for v in args.grid.split(",") if v.strip()]
    elif args.min is not None and args.max is not None and args.step:
        n = int(np.floor((args.max - args.min) / args.step + 1e-9)) + 1
        grid = [round(args.min + i * args.step, 12) for i in range(n)]
    else:
        raise UsageError("sweep needs --grid or --min/--max/--step")
    if not grid:
        raise UsageError("sweep grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise UsageError("sweep grid must be strictly increasing")
    return grid


def cmd_sweep(args) -> int:
    grid = _parse_grid(args)
    pricer = Pricer.parse(args.pricer)
    if args.axis == "sigma1" and pricer is not Pricer.MS:
        raise UsageError("--axis sigma1 requires --pricer ms")
    if args.axis == "sigma" and pricer is Pricer.MS:
        raise UsageError("--axis sigma requires --pricer gbm; use sigma1 for ms")
    rows = []
    for v in grid:
        theta = v if args.axis == "theta" else None
        if pricer is Pricer.GBM:
            out = _price_gbm(args, sigma=v if args.axis == "sigma" else None, theta=theta)
        else:
            out = _price_ms(args, sigma1=v if args.axis == "sigma1" else None, theta=theta)
        rows.append((v, out["m_r"], out["m_r_bps"], out["std_error"]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([args.axis, "m_r", "m_r_bps", "std_error"])
    for v, m, bps, se in rows:
        w.writerow([repr(v), repr(m), repr(bps), "" if se is None else repr(se)])
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_backtest(args) -> int:
    series = [load_returns(path, args.format) for path in args.returns]
    if len(series) > 1 and not args.equal_weight:
        raise UsageError("several --returns files need --equal-weight")
    returns = equal_weight_buy_and_hold(series) if len(series) > 1 else series[0]
    rates = load_rates(args.rates) if args.rates else RateSeries.constant(args.r)
    if not args.no_antithetic and args.n_paths % 2:
        raise UsageError("--n-paths must be even with antithetic sampling")
    config = BacktestConfig(
        pricer=args.pricer,
        theta_days=args.theta_days,
        c_m=args.c_m,
        alpha_m=args.alpha_m,
        m_m=args.m_m,
        window_years=args.window_years,
        max_periods=args.max_periods,
        start_date=date.fromisoformat(args.start_date) if args.start_date else None,
        sim=SimConfig(n_paths=args.n_paths, seed=args.seed, antithetic=not args.no_antithetic),
    )
    ledger = run_backtest(config, returns, rates)
    if args.ledger_out:
        ledger.write_csv(args.ledger_out)
    if args.summary_out:
        ledger.write_summary(args.summary_out)
    print(f"{'period':>6} {'start':>10} {'end':>10} {'m_R[bps]':>9} {'investor':>10} {'manager':>10} {'reinsurer':>10}  breach")
    for p in ledger.periods:
        print(
            f"{p.index:>6} {p.start_date:>10} {p.end_date:>10} {p.m_r / BPS:>9.3f} "
            f"{p.investor_end:>10.6f} {p.manager_end:>10.6f} {p.reinsurer_end:>10.6f}  {p.breach_date or '-'}"
        )
    return 0


def _add_measure(p: argparse.ArgumentParser) -> None:
    p.add_argument("--measure", choices=["risk-neutral", "empirical"], default="risk-neutral")


def _add_gbm(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", type=float, default=0.25, help="annual volatility")
    p.add_argument("--drift", type=float, help="empirical arithmetic drift b")
    p.add_argument("--mu-emp", type=float, help="empirical mean log-return; b = mu_emp + sigma^2/2")


def _add_ms(p: argparse.ArgumentParser, seed_required: bool = True) -> None:
    p.add_argument("--sigma1", type=float, default=0.0329)
    p.add_argument("--sigma2", type=float, default=0.0895)
    p.add_argument("--mu1", type=float, default=0.0624)
    p.add_argument("--mu2", type=float, default=-0.1865)
    p.add_argument("--p", type=float, default=0.0175, help="daily P(normal -> stressed)")
    p.add_argument("--q", type=float, default=0.0865, help="daily P(stressed -> normal)")
    p.add_argument("--n-paths", type=int, default=100_000)
    if seed_required:
        p.add_argument("--seed", type=int, required=True)
    else:
        p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-antithetic", action="store_true")
    p.add_argument("--initial-state", choices=["good", "stressed", "stationary"], default="good")
    p.add_argument("--weight-good", type=float, help="mix good- and stressed-start premiums")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liqprem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price-gbm", help="closed-form premium under GBM")
    _contract_args(p)
    _add_gbm(p)
    _add_measure(p)
    p.set_defaults(func=cmd_price_gbm)

    p = sub.add_parser("price-ms", help="Monte Carlo premium under the Markov-switching model")
    _contract_args(p)
    _add_ms(p)
    _add_measure(p)
    p.set_defaults(func=cmd_price_ms)

    p = sub.add_parser("fit-hmm", help="calibrate the two-state model to a return series")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["levels", "simple", "log"], default="log")
    p.add_argument("--window", type=int, default=21)
    p.add_argument("--multiplier", type=float, default=1.5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--states-out", help="write decoded states as CSV")
    p.set_defaults(func=cmd_fit_hmm)

    p = sub.add_parser("sweep", help="premium along one parameter axis, as CSV")
    p.add_argument("--axis", choices=["sigma", "theta", "sigma1"], required=True)
    p.add_argument("--grid", help="comma-separated values")
    p.add_argument("--min", type=float)
    p.add_argument("--max", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--pricer", choices=["gbm", "ms"], default="gbm")
    p.add_argument("--output", "-o")
    _contract_args(p)
    _add_gbm(p)
    _add_measure(p)
    _add_ms(p, seed_required=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("backtest", help="rolling-window historical backtest")
    p.add_argument("--returns", action="append", required=True, help="CSV path; repeat with --equal-weight")
    p.add_argument("--format", choices=["levels", "simple", "log"], default="levels")
    p.add_argument("--rates", help="CSV of annual risk-free rates; defaults to constant --r")
    p.add_argument("--r", type=float, default=0.01)
    p.add_argument("--equal-weight", action="store_true")
    p.add_argument("--pricer", choices=["gbm", "ms"], default="gbm")
    p.add_argument("--theta-days", type=float, default=1.0)
    p.add_argument("--c-m", type=float, default=0.1)
    p.add_argument("--alpha-m", type=float, default=0.5)
    p.add_argument("--m-m", type=float, default=0.0)
    p.add_argument("--window-years", type=int, default=2)
    p.add_argument("--max-periods", type=int, default=13)
    p.add_argument("--start-date")
    p.add_argument("--n-paths", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-antithetic", action="store_true")
    p.add_argument("--ledger-out")
    p.add_argument("--summary-out")
    p.set_defaults(func=cmd_backtest)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, DomainError) as exc:
        print(f"liqprem {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LiqpremError, OSError) as exc:
        print(f"liqprem {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
