"""Forward pricing with the fitted continuation networks as exercise rule.

Along each fresh path an instrument is exercised at the first exercisable
date where its exercise value strictly exceeds the estimated continuation;
ties continue.  Since the rule cannot look ahead, the resulting price is a
low-biased estimate of the optimal-stopping value.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .lsm import TrainedPolicy, one_step_value
from .market import (
    STREAM_BACKWARD, STREAM_PRICING, TimeGrid, discount, map_blocks, simulate_block,
)


@dataclass(frozen=True, eq=False)
class PricingResult:
    labels: tuple[str, ...]
    price: np.ndarray
    stderr: np.ndarray
    n_paths: int
    seed: int
    # (n_dates, K) number of paths stopping at each date
    stop_histogram: np.ndarray
    # (n_paths, K) discounted cash flows, kept for portfolio aggregation
    cashflows: np.ndarray = field(repr=False)

    def __getitem__(self, label: str) -> tuple[float, float]:
        k = self.labels.index(label)
        return float(self.price[k]), float(self.stderr[k])

    def portfolio_price(self) -> tuple[float, float]:
        total = self.cashflows.sum(axis=1)
        return float(total.mean()), float(total.std(ddof=1) / np.sqrt(total.size)) if total.size > 1 else 0.0


def exercise_along(
    policy: TrainedPolicy, paths: np.ndarray, last_index: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Apply the exercise rule on dates ``1..last_index`` (inclusive).

    ``paths`` has shape ``(B, >= last_index + 1, d)``.  Returns the stop date
    per path and instrument (``-1`` while still alive) and the exercise
    values received at those dates (undiscounted).
    """
    portfolio = policy.portfolio
    N = portfolio.grid.n_steps
    mask = portfolio.exercise_mask()
    B, K = paths.shape[0], portfolio.size
    stop = np.full((B, K), -1, dtype=np.int64)
    value = np.zeros((B, K))
    for n in range(1, last_index + 1):
        if not mask[n].any():
            continue
        s = paths[:, n, :]
        intr = portfolio.intrinsic(s)
        if n == N:
            ex = (stop < 0) & mask[n]
        else:
            cont = policy.continuation(n, s)
            ex = (stop < 0) & mask[n] & (intr > cont)
        stop[ex] = n
        value[ex] = intr[ex]
    return stop, value


def _discounted_cashflows(policy: TrainedPolicy, paths: np.ndarray):
    grid = policy.grid
    r = policy.portfolio.params.r
    stop, value = exercise_along(policy, paths, grid.n_steps)
    dfs = np.exp(-r * np.asarray(grid.dates))
    return value * dfs[np.maximum(stop, 0)], stop


def price_with_policy(
    policy: TrainedPolicy, n_paths: int, seed: int, workers: int = 1,
) -> PricingResult:
    """Low-biased prices (with standard errors) on ``n_paths`` fresh paths."""
    if n_paths < 1:
        raise ContractViolation("n_paths must be >= 1")
    portfolio = policy.portfolio
    grid, params = portfolio.grid, portfolio.params
    n_dates = grid.n_steps + 1

    def block(b, start, stop):
        paths = simulate_block(params, grid, seed, STREAM_PRICING, b, stop - start)
        cf, when = _discounted_cashflows(policy, paths)
        hist = np.zeros((n_dates, portfolio.size), dtype=np.int64)
        for k in range(portfolio.size):
            hist[:, k] = np.bincount(when[:, k], minlength=n_dates)
        return cf, hist

    parts = map_blocks(block, n_paths, workers)
    cash = np.concatenate([p[0] for p in parts], axis=0)
    hist = sum(p[1] for p in parts)
    price = cash.mean(axis=0)
    err = cash.std(axis=0, ddof=1) / np.sqrt(n_paths) if n_paths > 1 else np.zeros(portfolio.size)
    return PricingResult(tuple(portfolio.labels), price, err, n_paths, seed, hist, cash)


def backward_estimate(
    policy: TrainedPolicy, n_paths: int, seed: int, workers: int = 1,
) -> np.ndarray:
    """Continuation values propagated to ``t_0`` through the first network.

    High-biased and without a usable error bar (the networks were fitted on
    the same kind of noisy targets they are now averaged over), so only the
    point estimate is returned.
    """
    portfolio = policy.portfolio
    grid, params = portfolio.grid, portfolio.params
    nxt = policy.networks.get(1) if grid.n_steps > 1 else None
    df = discount(0.0, grid.dates[1], params.r)

    def block(b, start, stop):
        paths = simulate_block(params, grid, seed, STREAM_BACKWARD, b, stop - start, last_index=1)
        return one_step_value(portfolio, paths[:, 1, :], 1, nxt).sum(axis=0)

    total = sum(map_blocks(block, n_paths, workers))
    return df * total / n_paths


CSV_COLUMNS = ("label", "price", "stderr", "n_paths", "seed")


def pricing_rows(result: PricingResult) -> list[dict]:
    return [
        {"label": lab, "price": float(p), "stderr": float(e), "n_paths": result.n_paths, "seed": result.seed}
        for lab, p, e in zip(result.labels, result.price, result.stderr)
    ]
