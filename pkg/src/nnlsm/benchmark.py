"""Comparison runs against reference prices: the single-asset put across
exercise frequencies (with the dt -> 0 extrapolation and a binomial
reference) and the Bermudan max-call against reference confidence intervals.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .config import MaxCallBenchmark, MaxCallCase, PutBenchmark
from .instruments import Portfolio, american_put, call_on_max, every
from .lsm import LsmConfig, train_policy
from .market import ModelParams, TimeGrid
from .oracles import binomial_put, extrapolate_dt_zero
from .pricing import price_with_policy

FREQUENCY_LABELS = {6: "2M", 12: "1M", 26: "2W", 52: "1W"}


@dataclass(frozen=True)
class BenchRow:
    case: str
    dt: float
    price: float
    stderr: float
    n_paths: int
    seed: int
    train_seconds: float = 0.0
    price_seconds: float = 0.0


@dataclass(frozen=True)
class PutSeries:
    spot: float
    rows: tuple[BenchRow, ...]
    extrapolated: float
    binomial: float


@dataclass(frozen=True)
class MaxCallRow:
    n_assets: int
    spot: float
    price: float
    stderr: float
    ci: tuple[float, float]
    n_paths: int
    seed: int

    @property
    def passed(self) -> bool:
        """Inside the reference interval up to three own standard errors."""
        lo, hi = self.ci
        return lo - 3 * self.stderr <= self.price <= hi + 3 * self.stderr


def put_portfolio(bench: PutBenchmark, spot: float, dates_per_year: int) -> Portfolio:
    steps = round(dates_per_year * bench.maturity)
    grid = TimeGrid.uniform(bench.maturity, steps)
    params = ModelParams(bench.r, (bench.dividend,), (bench.sigma,), (spot,))
    label = FREQUENCY_LABELS.get(dates_per_year, f"{dates_per_year}/y")
    return Portfolio((american_put(bench.strike, 0, every(grid, 1), label),), grid, params)


def put_series(
    bench: PutBenchmark, spot: float, lsm: LsmConfig, n_paths: int, seed: int,
    workers: int = 1, binomial: float | None = None,
) -> PutSeries:
    """Policy prices for each exercise frequency plus their dt -> 0 intercept."""
    rows = []
    for freq in bench.dates_per_year:
        pf = put_portfolio(bench, spot, freq)
        tic = time.perf_counter()
        policy = train_policy(pf, lsm)
        mid = time.perf_counter()
        res = price_with_policy(policy, n_paths, seed, workers)
        rows.append(BenchRow(
            pf.labels[0], pf.grid.dt(0), float(res.price[0]), float(res.stderr[0]), n_paths, seed,
            mid - tic, time.perf_counter() - mid,
        ))
    extrap = extrapolate_dt_zero([(r.dt, r.price) for r in rows])
    if binomial is None:
        binomial = binomial_put(
            spot, bench.strike, bench.r, bench.dividend, bench.sigma, bench.maturity, bench.tree_steps,
        ).price
    return PutSeries(spot, tuple(rows), extrap, binomial)


def max_call_portfolio(bench: MaxCallBenchmark, case: MaxCallCase) -> Portfolio:
    grid = TimeGrid.uniform(bench.maturity, bench.n_dates)
    params = ModelParams.uniform(case.n_assets, bench.r, bench.dividend, bench.sigma, case.spot)
    inst = call_on_max(bench.strike, range(case.n_assets), every(grid, 1), f"bCM{case.n_assets}")
    return Portfolio((inst,), grid, params)


def max_call_row(
    bench: MaxCallBenchmark, case: MaxCallCase, lsm: LsmConfig, n_paths: int, seed: int,
    workers: int = 1,
) -> MaxCallRow:
    policy = train_policy(max_call_portfolio(bench, case), lsm)
    res = price_with_policy(policy, n_paths, seed, workers)
    return MaxCallRow(
        case.n_assets, case.spot, float(res.price[0]), float(res.stderr[0]), case.ci, n_paths, seed,
    )
