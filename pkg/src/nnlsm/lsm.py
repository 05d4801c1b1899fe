"""Backward induction: fit one multi-output continuation network per date.

At each interior date ``n`` (from ``N-1`` down to ``1``) every outer path
launches ``M`` one-step draws to ``t_{n+1}``.  Each draw is valued with the
terminal payoff (``n+1 = N``) or with ``max(exercise, continuation)`` using
the network already fitted at ``n+1``; the discounted fan average is the
regression target for the outer state.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import network as nn
from .errors import ContractViolation, TrainingError
from .instruments import Instrument, Portfolio
from .market import (
    InnerFan, ModelParams, PathSet, STREAM_OUTER, TimeGrid, discount, simulate_paths,
    spawn_inner_fan,
)

logger = logging.getLogger(__name__)

POLICY_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LsmConfig:
    """Backward-induction settings.

    ``itm_only`` lists instrument labels whose continuation is regressed on
    the in-the-money outer states only (the classic LSM restriction); the
    default fits every output on all outer paths.  The restricted fits are
    meant for exercise decisions: out of the money they extrapolate, which
    makes them poor marks for P&L.
    """

    n_outer_paths: int = 50_000
    m_inner: int = 16
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    seed: int = 0
    warm_start: bool = True
    fresh_paths_per_date: bool = False
    workers: int = 1
    itm_only: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "itm_only", tuple(str(s) for s in self.itm_only))
        if self.n_outer_paths < 1 or self.m_inner < 1:
            raise ContractViolation("n_outer_paths and m_inner must be >= 1")


@dataclass
class DateDiagnostics:
    date_index: int
    loss: float
    initial_loss: float
    epochs: int
    samples: int
    seconds: float = 0.0


@dataclass(eq=False)
class TrainedPolicy:
    """Continuation networks for every interior grid date ``1..N-1``."""

    portfolio: Portfolio
    networks: dict[int, nn.Network]
    diagnostics: list[DateDiagnostics] = field(default_factory=list)
    config: LsmConfig | None = None

    def __post_init__(self):
        N = self.portfolio.grid.n_steps
        missing = [n for n in range(1, N) if n not in self.networks]
        if missing:
            raise ContractViolation(f"no continuation network for dates {missing}")
        for n, net in self.networks.items():
            if net.n_outputs != self.portfolio.size or net.n_inputs != self.portfolio.params.n_assets:
                raise ContractViolation(f"network at date {n} has shape {net.layer_sizes}")

    @property
    def grid(self) -> TimeGrid:
        return self.portfolio.grid

    def continuation(self, date_index: int, states) -> np.ndarray:
        """Estimated continuation values at an interior date, floored at 0."""
        net = self.networks.get(date_index)
        if net is None:
            raise ContractViolation(f"no continuation network for date {date_index}")
        return np.maximum(net.predict(states), 0.0)


def terminal_values(portfolio: Portfolio, states) -> np.ndarray:
    """Payoffs at maturity, one column per instrument."""
    return portfolio.intrinsic(states)


def one_step_value(
    portfolio: Portfolio, states, date_index: int, next_net: nn.Network | None,
) -> np.ndarray:
    """Per-instrument value of holding the claims at ``date_index``.

    At maturity this is the payoff.  Before it, instruments exercisable at
    ``date_index`` are worth ``max(exercise, continuation)``; the others are
    worth their continuation.  Continuations are floored at zero since every
    payoff is non-negative.
    """
    if date_index == portfolio.grid.n_steps:
        return terminal_values(portfolio, states)
    if next_net is None:
        raise ContractViolation(f"missing continuation network for date {date_index}")
    cont = np.maximum(next_net.predict(states), 0.0)
    mask = portfolio.exercise_mask()[date_index]
    if not mask.any():
        return cont
    intr = portfolio.intrinsic(states)
    return np.where(mask, np.maximum(intr, cont), cont)


def regression_targets(
    outer: PathSet, date_index: int, fan: InnerFan, next_net: nn.Network | None,
    portfolio: Portfolio,
) -> tuple[np.ndarray, np.ndarray]:
    """Outer states at ``date_index`` and their discounted fan-average values."""
    n = date_index
    if fan.date_index != n:
        raise ContractViolation(f"fan was spawned at date {fan.date_index}, not {n}")
    if fan.values.shape[0] != outer.n_paths or fan.values.shape[2] != outer.values.shape[2]:
        raise ContractViolation("inner fan does not match the outer path set")
    grid = outer.grid
    df = discount(grid.dates[n], grid.dates[n + 1], portfolio.params.r)
    flat = fan.values.reshape(-1, fan.values.shape[2])
    vals = one_step_value(portfolio, flat, n + 1, next_net)
    vals = vals.reshape(fan.values.shape[0], fan.m_count, portfolio.size)
    return outer.at(n), df * vals.mean(axis=1)


def train_policy(portfolio: Portfolio, cfg: LsmConfig = LsmConfig()) -> TrainedPolicy:
    """Fit continuation networks from the last interior date back to the first."""
    grid, params = portfolio.grid, portfolio.params
    N = grid.n_steps
    unknown = set(cfg.itm_only) - set(portfolio.labels)
    if unknown:
        raise ContractViolation(f"itm_only names unknown instruments {sorted(unknown)}")
    itm_cols = np.array([lab in cfg.itm_only for lab in portfolio.labels])
    outer = None
    if not cfg.fresh_paths_per_date:
        outer = simulate_paths(params, grid, cfg.n_outer_paths, cfg.seed, STREAM_OUTER, cfg.workers)
    networks: dict[int, nn.Network] = {}
    diags: list[DateDiagnostics] = []
    next_net = None
    for n in range(N - 1, 0, -1):
        tic = time.perf_counter()
        paths = outer
        if paths is None:
            paths = simulate_paths(
                params, grid, cfg.n_outer_paths, cfg.seed, STREAM_OUTER, cfg.workers, extra=(n,),
            )
        fan = spawn_inner_fan(paths, n, cfg.m_inner, params, cfg.seed, cfg.workers)
        x, y = regression_targets(paths, n, fan, next_net, portfolio)
        init = next_net if (cfg.warm_start and next_net is not None) else None
        tcfg = replace(cfg.train, seed=cfg.train.seed + 7919 * n)
        try:
            fit = nn.train(init, x, y, tcfg, input_scale=params.s0, mask=_itm_mask(portfolio, x, itm_cols, n))
        except TrainingError as err:
            raise err.at_date(n) from err
        networks[n] = next_net = fit.network
        diags.append(DateDiagnostics(
            n, fit.loss, fit.initial_loss, fit.epochs, x.shape[0], time.perf_counter() - tic,
        ))
        logger.info(
            "date %d: loss %.4g (from %.4g) after %d epochs, %.1fs",
            n, fit.loss, fit.initial_loss, fit.epochs, diags[-1].seconds,
        )
    return TrainedPolicy(portfolio, networks, diags[::-1], cfg)


def _itm_mask(portfolio: Portfolio, states: np.ndarray, cols: np.ndarray, n: int) -> np.ndarray | None:
    """0/1 sample mask restricting the ``cols`` outputs to in-the-money states.

    A column with no in-the-money state at this date keeps all samples.
    """
    if not cols.any():
        return None
    mask = np.ones((states.shape[0], cols.size))
    itm = portfolio.intrinsic(states) > 0
    for k in np.flatnonzero(cols):
        if itm[:, k].any():
            mask[:, k] = itm[:, k]
        else:
            logger.info("date %d: %s has no in-the-money state, fitting all paths",
                        n, portfolio.labels[k])
    return mask


def _cfg_to_dict(cfg: LsmConfig | None) -> dict | None:
    if cfg is None:
        return None
    d = asdict(cfg)
    # execution detail, results do not depend on it
    del d["workers"]
    d["train"]["activation"] = cfg.train.activation.value
    d["train"]["hidden"] = list(cfg.train.hidden)
    d["itm_only"] = list(cfg.itm_only)
    return d


def _cfg_from_dict(d: dict | None) -> LsmConfig | None:
    if d is None:
        return None
    d = dict(d)
    d["train"] = nn.TrainConfig(**d["train"])
    return LsmConfig(**d)


def portfolio_from_dict(d: dict) -> Portfolio:
    p = d["params"]
    params = ModelParams(p["r"], tuple(p["delta"]), tuple(p["sigma"]), tuple(p["s0"]))
    insts = tuple(Instrument(**i) for i in d["instruments"])
    return Portfolio(insts, TimeGrid(tuple(d["grid"])), params)


def save_policy(policy: TrainedPolicy, directory: str | Path) -> Path:
    """Write ``manifest.json`` plus one ``net_NNNN.bin`` per date.

    The manifest is a pure function of the portfolio, the configuration and
    the seeds; wall-clock timings go to a separate ``train_log.json``.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for n, net in sorted(policy.networks.items()):
        name = f"net_{n:04d}.bin"
        nn.save(net, out / name)
        files[str(n)] = name
    manifest = {
        "format_version": POLICY_FORMAT_VERSION,
        "portfolio": policy.portfolio.describe(),
        "portfolio_hash": policy.portfolio.fingerprint(),
        "config": _cfg_to_dict(policy.config),
        "networks": files,
        "diagnostics": [
            {k: v for k, v in asdict(d).items() if k != "seconds"} for d in policy.diagnostics
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    timings = {str(d.date_index): d.seconds for d in policy.diagnostics}
    (out / "train_log.json").write_text(json.dumps({"seconds": timings}, indent=2))
    return out


def load_policy(directory: str | Path) -> TrainedPolicy:
    src = Path(directory)
    manifest = json.loads((src / "manifest.json").read_text())
    if manifest.get("format_version") != POLICY_FORMAT_VERSION:
        raise ContractViolation(f"unsupported policy format {manifest.get('format_version')}")
    portfolio = portfolio_from_dict(manifest["portfolio"])
    if portfolio.fingerprint() != manifest["portfolio_hash"]:
        raise ContractViolation("policy manifest hash does not match its portfolio")
    nets = {int(n): nn.load(src / f) for n, f in manifest["networks"].items()}
    diags = [DateDiagnostics(**d) for d in manifest.get("diagnostics", [])]
    return TrainedPolicy(portfolio, nets, diags, _cfg_from_dict(manifest.get("config")))
