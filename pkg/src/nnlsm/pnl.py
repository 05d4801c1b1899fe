"""Future P&L distribution of a portfolio and of each of its instruments.

Scenario paths are simulated to the horizon and the exercise rule is
applied along them.  Instruments still alive at the horizon are marked at
their fitted continuation value; instruments exercised at ``t_e`` (the
horizon included) are held as cash grown at the short rate to the horizon.
P&L is ``D(0, t) * value_t - value_0`` with ``value_0`` the policy price.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ContractViolation
from .lsm import TrainedPolicy
from .market import STREAM_PNL, map_blocks, simulate_block
from .pricing import PricingResult, exercise_along, price_with_policy

QUANTILE_LEVELS = (0.01, 0.10, 0.50, 0.90, 0.99)
PORTFOLIO = "portfolio"


def horizon_value(policy: TrainedPolicy, paths: np.ndarray, date_index: int) -> np.ndarray:
    """Value at ``t_n`` of every instrument along each path, shape ``(B, K)``.

    ``paths`` must cover dates ``0..date_index``.
    """
    grid = policy.grid
    n = date_index
    if not 1 <= n <= grid.n_steps:
        raise ContractViolation(f"horizon index {n} must lie in 1..{grid.n_steps}")
    if paths.shape[1] < n + 1:
        raise ContractViolation("paths do not reach the horizon")
    r = policy.portfolio.params.r
    stop, cash = exercise_along(policy, paths, n)
    dates = np.asarray(grid.dates)
    grown = cash * np.exp(r * (dates[n] - dates[np.maximum(stop, 0)]))
    if n == grid.n_steps:
        return grown
    alive = stop < 0
    return np.where(alive, policy.continuation(n, paths[:, n, :]), grown)


@dataclass(frozen=True, eq=False)
class PnlDistribution:
    horizon_index: int
    horizon: float
    labels: tuple[str, ...]
    # (L, K) per-instrument P&L, path order
    samples: np.ndarray = field(repr=False)
    baseline: np.ndarray
    n_paths: int
    seed: int

    def __post_init__(self):
        self.samples.setflags(write=False)

    @cached_property
    def portfolio(self) -> np.ndarray:
        """Pathwise sum of the instrument columns, accumulated left to right."""
        total = self.samples[:, 0].copy()
        for k in range(1, self.samples.shape[1]):
            total += self.samples[:, k]
        return total

    def column(self, label: str) -> np.ndarray:
        if label == PORTFOLIO:
            return self.portfolio
        return self.samples[:, self.labels.index(label)]

    @cached_property
    def _sorted(self) -> dict[str, np.ndarray]:
        return {lab: np.sort(self.column(lab)) for lab in (PORTFOLIO, *self.labels)}

    def sorted(self, label: str) -> np.ndarray:
        return self._sorted[label]

    def quantile(self, p: float, label: str = PORTFOLIO) -> float:
        return quantile_sorted(self.sorted(label), p)

    def var(self, p: float = 0.01, label: str = PORTFOLIO) -> float:
        """Value-at-Risk: the negated ``p`` quantile."""
        return -self.quantile(p, label)


def quantile_sorted(xs: np.ndarray, p: float) -> float:
    """Quantile of sorted data at (1-based) rank ``p * (L + 1)``.

    Linear interpolation between neighbouring order statistics, clamped to
    the sample minimum and maximum outside ``[1, L]``.
    """
    if not 0.0 < p < 1.0:
        raise ContractViolation(f"quantile level must lie in (0, 1), got {p}")
    n = xs.shape[0]
    if n == 0:
        raise ContractViolation("quantile of an empty sample")
    h = p * (n + 1)
    lo = int(np.floor(h))
    if lo < 1:
        return float(xs[0])
    if lo >= n:
        return float(xs[-1])
    frac = h - lo
    return float(xs[lo - 1] + frac * (xs[lo] - xs[lo - 1]))


def quantile(dist_or_samples, p: float, label: str = PORTFOLIO) -> float:
    if isinstance(dist_or_samples, PnlDistribution):
        return dist_or_samples.quantile(p, label)
    return quantile_sorted(np.sort(np.asarray(dist_or_samples, dtype=float)), p)


def build_pnl(
    policy: TrainedPolicy, horizon_index: int, n_paths: int, seed: int,
    baseline: PricingResult | Sequence[float] | None = None, workers: int = 1,
) -> PnlDistribution:
    """Sample the P&L at grid date ``horizon_index`` on ``n_paths`` fresh paths.

    ``baseline`` holds today's values (normally the policy prices); when
    omitted they are priced here on ``n_paths`` paths with the same seed.
    """
    portfolio = policy.portfolio
    grid, params = portfolio.grid, portfolio.params
    n = horizon_index
    if not 0 <= n <= grid.n_steps:
        raise ContractViolation(f"horizon index {n} outside the grid")
    if n_paths < 1:
        raise ContractViolation("n_paths must be >= 1")
    if baseline is None:
        baseline = price_with_policy(policy, n_paths, seed, workers)
    v0 = np.asarray(baseline.price if isinstance(baseline, PricingResult) else baseline, dtype=float)
    if v0.shape != (portfolio.size,):
        raise ContractViolation(f"baseline must have {portfolio.size} entries")
    t = grid.dates[n]
    labels = tuple(portfolio.labels)
    if n == 0:
        samples = np.zeros((n_paths, portfolio.size))
        return PnlDistribution(0, 0.0, labels, samples, v0, n_paths, seed)
    df = np.exp(-params.r * t)

    def block(b, start, stop):
        paths = simulate_block(params, grid, seed, STREAM_PNL, b, stop - start, last_index=n)
        return df * horizon_value(policy, paths, n) - v0

    samples = np.concatenate(map_blocks(block, n_paths, workers), axis=0)
    return PnlDistribution(n, t, labels, samples, v0, n_paths, seed)


def quantile_table(
    dist: PnlDistribution, levels: Sequence[float] = QUANTILE_LEVELS, scale: float = 1.0,
) -> dict[str, list[float]]:
    """Portfolio and per-instrument quantiles, optionally rescaled."""
    return {
        lab: [scale * dist.quantile(p, lab) for p in levels]
        for lab in (PORTFOLIO, *dist.labels)
    }


def export_cdf(dist: PnlDistribution) -> dict[str, np.ndarray]:
    """Step-CDF points ``(value, i / L)`` for the portfolio and each instrument."""
    L = dist.n_paths
    probs = np.arange(1, L + 1) / L
    return {lab: np.column_stack([dist.sorted(lab), probs]) for lab in (PORTFOLIO, *dist.labels)}
