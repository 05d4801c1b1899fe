"""Uncorrelated multi-asset geometric Brownian motion on a date grid.

Random numbers come from per-block streams: paths are grouped in fixed
blocks of ``BLOCK_SIZE`` and block ``b`` of a stream draws from its own
``SeedSequence(seed, spawn_key=(tag, *extra, b))``.  A path's variates
therefore depend only on (seed, stream tag, path index), never on how many
paths were requested in total or how blocks are distributed over workers.
Normals are produced by numpy's ziggurat sampler.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ContractViolation

BLOCK_SIZE = 8192

# stream tags, kept distinct so different uses of one seed never overlap
STREAM_OUTER = 1
STREAM_INNER = 2
STREAM_PRICING = 3
STREAM_PNL = 4
STREAM_BACKWARD = 5
STREAM_DENSE = 6


@dataclass(frozen=True)
class ModelParams:
    """Risk-neutral GBM parameters: short rate, and per asset dividend yield,
    volatility and spot."""

    r: float
    delta: tuple[float, ...]
    sigma: tuple[float, ...]
    s0: tuple[float, ...]

    def __post_init__(self):
        for name in ("delta", "sigma", "s0"):
            object.__setattr__(self, name, tuple(float(v) for v in np.atleast_1d(getattr(self, name))))
        n = len(self.s0)
        if n < 1:
            raise ContractViolation("ModelParams needs at least one asset")
        if len(self.delta) != n or len(self.sigma) != n:
            raise ContractViolation(
                f"delta/sigma/s0 lengths differ: {len(self.delta)}, {len(self.sigma)}, {n}"
            )
        if any(s < 0 for s in self.sigma):
            raise ContractViolation("volatilities must be non-negative")
        if any(s <= 0 for s in self.s0):
            raise ContractViolation("spot prices must be positive")

    @classmethod
    def uniform(cls, n_assets: int, r: float, delta: float, sigma: float, s0: float) -> "ModelParams":
        return cls(r, (delta,) * n_assets, (sigma,) * n_assets, (s0,) * n_assets)

    @property
    def n_assets(self) -> int:
        return len(self.s0)

    def drift_array(self) -> np.ndarray:
        sig = np.asarray(self.sigma)
        return self.r - np.asarray(self.delta) - 0.5 * sig * sig


@dataclass(frozen=True)
class TimeGrid:
    """Simulation dates in years, ``dates[0] == 0`` and ``dates[-1]`` the maturity."""

    dates: tuple[float, ...]

    def __post_init__(self):
        d = tuple(float(t) for t in self.dates)
        object.__setattr__(self, "dates", d)
        if len(d) < 2:
            raise ContractViolation("a time grid needs at least two dates")
        if d[0] != 0.0:
            raise ContractViolation("time grid must start at 0")
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ContractViolation("time grid dates must be strictly increasing")

    @classmethod
    def uniform(cls, maturity: float, n_steps: int) -> "TimeGrid":
        if n_steps < 1:
            raise ContractViolation("n_steps must be >= 1")
        return cls(tuple(maturity * i / n_steps for i in range(n_steps + 1)))

    @property
    def n_steps(self) -> int:
        return len(self.dates) - 1

    @property
    def maturity(self) -> float:
        return self.dates[-1]

    def dt(self, n: int) -> float:
        return self.dates[n + 1] - self.dates[n]

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of the grid date equal to ``t`` (within ``tol``)."""
        arr = np.asarray(self.dates)
        i = int(np.argmin(np.abs(arr - t)))
        if abs(arr[i] - t) > tol:
            raise ContractViolation(f"time {t} is not a grid date")
        return i


@dataclass(frozen=True, eq=False)
class PathSet:
    """Outer scenarios, ``values[j, n, i]`` = price of asset i on path j at date n."""

    values: np.ndarray
    seed: int
    grid: TimeGrid

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[1] != len(self.grid.dates):
            raise ContractViolation(
                f"path array shape {self.values.shape} inconsistent with {len(self.grid.dates)} dates"
            )
        self.values.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def at(self, n: int) -> np.ndarray:
        return self.values[:, n, :]


@dataclass(frozen=True, eq=False)
class InnerFan:
    """``values[j, m, i]``: m-th one-step draw from outer path j, at ``date_index``."""

    values: np.ndarray
    date_index: int
    seed: int

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def m_count(self) -> int:
        return self.values.shape[1]


def _check_state(state: np.ndarray, params: ModelParams) -> None:
    if state.shape[-1] != params.n_assets:
        raise ContractViolation(
            f"state has {state.shape[-1]} assets, model has {params.n_assets}"
        )


def gbm_step(state, dt: float, params: ModelParams, z) -> np.ndarray:
    """Advance prices by ``dt`` years given standard normal shocks ``z``.

    Works on a single price vector or any array whose last axis is the
    asset axis; ``z`` must broadcast against ``state``.
    """
    state = np.asarray(state, dtype=float)
    z = np.asarray(z, dtype=float)
    _check_state(state, params)
    if z.shape[-1] != params.n_assets:
        raise ContractViolation(f"z has {z.shape[-1]} components, model has {params.n_assets}")
    if not dt > 0:
        raise ContractViolation(f"dt must be positive, got {dt}")
    sig = np.asarray(params.sigma)
    return state * np.exp(params.drift_array() * dt + sig * np.sqrt(dt) * z)


def discount(t1: float, t2: float, r: float) -> float:
    """Flat continuously-compounded discount factor from ``t2`` back to ``t1``."""
    if t2 < t1:
        raise ContractViolation(f"discount needs t2 >= t1, got t1={t1}, t2={t2}")
    return float(np.exp(-r * (t2 - t1)))


def block_rng(seed: int, tag: int, block: int, *extra: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tag), *map(int, extra), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def block_ranges(n_paths: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int, int]]:
    """(block index, start, stop) covering ``range(n_paths)``."""
    return [
        (b, start, min(start + block_size, n_paths))
        for b, start in enumerate(range(0, n_paths, block_size))
    ]


def map_blocks(fn: Callable, n_paths: int, workers: int = 1) -> list:
    """Apply ``fn(block, start, stop)`` to every block, results in block order."""
    ranges = block_ranges(n_paths)
    if workers <= 1 or len(ranges) == 1:
        return [fn(*br) for br in ranges]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda br: fn(*br), ranges))


def simulate_block(
    params: ModelParams, grid: TimeGrid, seed: int, tag: int, block: int, size: int,
    last_index: int | None = None, extra: tuple[int, ...] = (),
) -> np.ndarray:
    """Paths of one block, shape ``(size, last_index + 1, n_assets)``.

    ``last_index`` (default: maturity) truncates the simulation without
    changing the values of the dates that are produced.
    """
    last = grid.n_steps if last_index is None else last_index
    d = params.n_assets
    rng = block_rng(seed, tag, block, *extra)
    # path-major draws for every step: a path's shocks depend neither on the
    # block fill level nor on how far the block is simulated
    z = rng.standard_normal((size, grid.n_steps, d))
    out = np.empty((size, last + 1, d))
    out[:, 0, :] = params.s0
    for n in range(last):
        out[:, n + 1, :] = gbm_step(out[:, n, :], grid.dt(n), params, z[:, n, :])
    return out


def iter_path_blocks(
    params: ModelParams, grid: TimeGrid, n_paths: int, seed: int, tag: int = STREAM_OUTER,
    last_index: int | None = None,
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(start, block_values)`` without holding all paths in memory."""
    for b, start, stop in block_ranges(n_paths):
        yield start, simulate_block(params, grid, seed, tag, b, stop - start, last_index)


def simulate_paths(
    params: ModelParams, grid: TimeGrid, n_paths: int, seed: int, tag: int = STREAM_OUTER,
    workers: int = 1, extra: tuple[int, ...] = (),
) -> PathSet:
    """Simulate ``n_paths`` scenarios from ``params.s0`` over every grid date.

    ``extra`` sub-keys the stream (e.g. a date index for fresh per-date sets).
    """
    if n_paths < 1:
        raise ContractViolation("n_paths must be >= 1")
    blocks = map_blocks(
        lambda b, start, stop: simulate_block(params, grid, seed, tag, b, stop - start, None, extra),
        n_paths, workers,
    )
    return PathSet(np.concatenate(blocks, axis=0), seed, grid)


def spawn_inner_fan(
    outer: PathSet, date_index: int, m_count: int, params: ModelParams, seed: int,
    workers: int = 1,
) -> InnerFan:
    """Launch ``m_count`` one-step GBM draws from every outer path at ``date_index``."""
    n = date_index
    if not 0 <= n < outer.grid.n_steps:
        raise ContractViolation(f"date index {n} has no following date")
    if m_count < 1:
        raise ContractViolation("m_count must be >= 1")
    dt = outer.grid.dt(n)
    d = params.n_assets
    start_states = outer.at(n)

    def one(b, start, stop):
        rng = block_rng(seed, STREAM_INNER, b, n)
        z = rng.standard_normal((stop - start, m_count, d))
        return gbm_step(start_states[start:stop, None, :], dt, params, z)

    fan = np.concatenate(map_blocks(one, outer.n_paths, workers), axis=0)
    return InnerFan(fan, n, seed)
