"""Run configuration: YAML schema, defaults and validation.

Every validation failure raises ``ConfigError`` naming the offending field
as a dotted path (``instruments[1].strike``).  The full schema is described
in ``docs/formats.md``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, ContractViolation
from .instruments import Instrument, Kind, Portfolio, every
from .lsm import LsmConfig
from .market import ModelParams, TimeGrid
from .network import Activation, TrainConfig

SCHEMA_VERSION = 1
HORIZON_TOL = 1e-6

_TRAIN_KEYS = {
    "learning_rate": float, "max_epochs": int, "batch_size": int, "tolerance": float,
    "patience": int, "init_scale": float, "normalize_inputs": bool,
    "normalize_targets": bool, "refit_output": bool, "hidden": list, "activation": str, "lr_decay": float,
    "dtype": str, "seed": int,
}


@dataclass(frozen=True)
class PutBenchmark:
    spots: tuple[float, ...] = (100.0,)
    strike: float = 100.0
    r: float = 0.05
    sigma: float = 0.2
    dividend: float = 0.0
    maturity: float = 1.0
    dates_per_year: tuple[int, ...] = (6, 12, 26, 52)
    tree_steps: int = 20_000


@dataclass(frozen=True)
class MaxCallCase:
    n_assets: int
    spot: float
    ci: tuple[float, float]


@dataclass(frozen=True)
class MaxCallBenchmark:
    strike: float = 100.0
    r: float = 0.05
    sigma: float = 0.2
    dividend: float = 0.10
    maturity: float = 3.0
    n_dates: int = 9
    cases: tuple[MaxCallCase, ...] = (
        MaxCallCase(2, 100.0, (13.880, 13.910)),
        MaxCallCase(3, 100.0, (18.673, 18.699)),
    )


@dataclass(frozen=True)
class BenchmarkConfig:
    put: PutBenchmark = field(default_factory=PutBenchmark)
    max_call: MaxCallBenchmark = field(default_factory=MaxCallBenchmark)


@dataclass(frozen=True)
class RunConfig:
    portfolio: Portfolio
    lsm: LsmConfig
    pricing_paths: int
    pricing_seed: int
    pnl_horizons: tuple[int, ...]
    pnl_paths: int
    pnl_seed: int
    output_dir: str
    report_scale: float
    benchmark: BenchmarkConfig
    raw: dict = field(repr=False, compare=False)

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def seeds(self) -> dict[str, int]:
        return {"lsm": self.lsm.seed, "pricing": self.pricing_seed, "pnl": self.pnl_seed}


def _get(d: dict, key: str, loc: str, typ, default: Any = ..., ):
    if key not in d:
        if default is ...:
            raise ConfigError(f"{loc}.{key}" if loc else key, "missing required field")
        return default
    val = d[key]
    where = f"{loc}.{key}" if loc else key
    if typ is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(where, f"expected a number, got {type(val).__name__}")
        return float(val)
    if typ is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(where, f"expected an integer, got {type(val).__name__}")
        return val
    if not isinstance(val, typ):
        raise ConfigError(where, f"expected {typ.__name__}, got {type(val).__name__}")
    return val


def _section(d: dict, key: str, required: bool = True) -> dict:
    if key not in d:
        if required:
            raise ConfigError(key, "missing required section")
        return {}
    if not isinstance(d[key], dict):
        raise ConfigError(key, "expected a mapping")
    return d[key]


def _unknown(d: dict, allowed: set, loc: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{loc}.{extra[0]}" if loc else extra[0], "unknown field")


def _model(doc: dict) -> tuple[ModelParams, list[str]]:
    m = _section(doc, "model")
    _unknown(m, {"r", "assets"}, "model")
    r = _get(m, "r", "model", float)
    assets = _get(m, "assets", "model", list)
    if not assets:
        raise ConfigError("model.assets", "at least one asset required")
    names, spots, sigmas, divs = [], [], [], []
    for i, a in enumerate(assets):
        loc = f"model.assets[{i}]"
        if not isinstance(a, dict):
            raise ConfigError(loc, "expected a mapping")
        _unknown(a, {"name", "spot", "sigma", "dividend"}, loc)
        names.append(str(_get(a, "name", loc, str, f"asset{i}")))
        spots.append(_get(a, "spot", loc, float))
        sigmas.append(_get(a, "sigma", loc, float))
        divs.append(_get(a, "dividend", loc, float, 0.0))
        if spots[-1] <= 0:
            raise ConfigError(f"{loc}.spot", "must be positive")
        if sigmas[-1] < 0:
            raise ConfigError(f"{loc}.sigma", "must be non-negative")
    if len(set(names)) != len(names):
        raise ConfigError("model.assets", f"duplicate asset names {names}")
    return ModelParams(r, tuple(divs), tuple(sigmas), tuple(spots)), names


def _grid(doc: dict) -> TimeGrid:
    g = _section(doc, "grid")
    _unknown(g, {"maturity", "steps"}, "grid")
    maturity = _get(g, "maturity", "grid", float)
    steps = _get(g, "steps", "grid", int)
    if maturity <= 0:
        raise ConfigError("grid.maturity", "must be positive")
    if steps < 1:
        raise ConfigError("grid.steps", "must be >= 1")
    return TimeGrid.uniform(maturity, steps)


def _instruments(doc: dict, names: list[str], grid: TimeGrid) -> tuple[Instrument, ...]:
    items = _get(doc, "instruments", "", list)
    if not items:
        raise ConfigError("instruments", "at least one instrument required")
    out = []
    for i, it in enumerate(items):
        loc = f"instruments[{i}]"
        if not isinstance(it, dict):
            raise ConfigError(loc, "expected a mapping")
        _unknown(it, {"kind", "label", "strike", "underlying", "exercise_every", "call"}, loc)
        kind_s = _get(it, "kind", loc, str)
        try:
            kind = Kind(kind_s)
        except ValueError:
            raise ConfigError(f"{loc}.kind", f"unknown kind {kind_s!r}; one of {[k.value for k in Kind]}") from None
        und = _get(it, "underlying", loc, list)
        idx = []
        for j, u in enumerate(und):
            if isinstance(u, str):
                if u not in names:
                    raise ConfigError(f"{loc}.underlying[{j}]", f"no asset named {u!r}")
                idx.append(names.index(u))
            elif isinstance(u, int) and not isinstance(u, bool):
                if not 0 <= u < len(names):
                    raise ConfigError(f"{loc}.underlying[{j}]", f"asset index {u} out of range")
                idx.append(u)
            else:
                raise ConfigError(f"{loc}.underlying[{j}]", "expected an asset name or index")
        step = _get(it, "exercise_every", loc, int, 1)
        if step < 1:
            raise ConfigError(f"{loc}.exercise_every", "must be >= 1")
        dates = (grid.n_steps,) if kind in (Kind.EUROPEAN_CALL_ON_MIN, Kind.EUROPEAN_VANILLA) else every(grid, step)
        try:
            out.append(Instrument(
                kind, _get(it, "strike", loc, float), tuple(idx), dates,
                str(_get(it, "label", loc, str, "")), bool(_get(it, "call", loc, bool, True)),
            ))
        except ContractViolation as err:
            raise ConfigError(loc, str(err)) from None
    return tuple(out)


def _train(d: dict, loc: str) -> TrainConfig:
    _unknown(d, set(_TRAIN_KEYS), loc)
    kwargs = {}
    for key, typ in _TRAIN_KEYS.items():
        if key in d:
            kwargs[key] = _get(d, key, loc, typ)
    if "activation" in kwargs and kwargs["activation"] not in {a.value for a in Activation}:
        raise ConfigError(f"{loc}.activation", f"unknown activation {kwargs['activation']!r}")
    try:
        return TrainConfig(**kwargs)
    except (ContractViolation, TypeError, ValueError) as err:
        raise ConfigError(loc, str(err)) from None


def _lsm(doc: dict, labels: list[str]) -> LsmConfig:
    d = _section(doc, "lsm", required=False)
    _unknown(d, {"outer_paths", "inner_paths", "seed", "warm_start", "fresh_paths_per_date", "train",
                 "itm_only"}, "lsm")
    train = _train(_get(d, "train", "lsm", dict, {}), "lsm.train")
    itm_only = _get(d, "itm_only", "lsm", list, [])
    for i, lab in enumerate(itm_only):
        if lab not in labels:
            raise ConfigError(f"lsm.itm_only[{i}]", f"no instrument labelled {lab!r}")
    try:
        return LsmConfig(
            _get(d, "outer_paths", "lsm", int, 50_000), _get(d, "inner_paths", "lsm", int, 16), train,
            _get(d, "seed", "lsm", int, 0), _get(d, "warm_start", "lsm", bool, True),
            _get(d, "fresh_paths_per_date", "lsm", bool, False), itm_only=tuple(itm_only),
        )
    except ContractViolation as err:
        raise ConfigError("lsm", str(err)) from None


def _benchmark(doc: dict) -> BenchmarkConfig:
    d = _section(doc, "benchmark", required=False)
    _unknown(d, {"put", "max_call"}, "benchmark")
    p = _get(d, "put", "benchmark", dict, {})
    base = PutBenchmark()
    _unknown(p, set(base.__dataclass_fields__), "benchmark.put")
    put = PutBenchmark(
        tuple(float(s) for s in _get(p, "spots", "benchmark.put", list, list(base.spots))),
        _get(p, "strike", "benchmark.put", float, base.strike),
        _get(p, "r", "benchmark.put", float, base.r),
        _get(p, "sigma", "benchmark.put", float, base.sigma),
        _get(p, "dividend", "benchmark.put", float, base.dividend),
        _get(p, "maturity", "benchmark.put", float, base.maturity),
        tuple(int(n) for n in _get(p, "dates_per_year", "benchmark.put", list, list(base.dates_per_year))),
        _get(p, "tree_steps", "benchmark.put", int, base.tree_steps),
    )
    m = _get(d, "max_call", "benchmark", dict, {})
    mb = MaxCallBenchmark()
    _unknown(m, set(mb.__dataclass_fields__), "benchmark.max_call")
    cases = mb.cases
    if "cases" in m:
        cases = []
        for i, c in enumerate(_get(m, "cases", "benchmark.max_call", list)):
            loc = f"benchmark.max_call.cases[{i}]"
            ci = _get(c, "ci", loc, list)
            if len(ci) != 2 or ci[0] > ci[1]:
                raise ConfigError(f"{loc}.ci", "expected [low, high]")
            cases.append(MaxCallCase(_get(c, "n_assets", loc, int), _get(c, "spot", loc, float), (float(ci[0]), float(ci[1]))))
        cases = tuple(cases)
    mc = MaxCallBenchmark(
        _get(m, "strike", "benchmark.max_call", float, mb.strike),
        _get(m, "r", "benchmark.max_call", float, mb.r),
        _get(m, "sigma", "benchmark.max_call", float, mb.sigma),
        _get(m, "dividend", "benchmark.max_call", float, mb.dividend),
        _get(m, "maturity", "benchmark.max_call", float, mb.maturity),
        _get(m, "n_dates", "benchmark.max_call", int, mb.n_dates),
        cases,
    )
    return BenchmarkConfig(put, mc)


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a mapping at top level")
    _unknown(doc, {"schema_version", "model", "grid", "instruments", "lsm", "pricing", "pnl",
                   "output_dir", "report", "benchmark"}, "")
    version = _get(doc, "schema_version", "", int, SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version} (expected {SCHEMA_VERSION})")
    params, names = _model(doc)
    grid = _grid(doc)
    insts = _instruments(doc, names, grid)
    try:
        portfolio = Portfolio(insts, grid, params)
    except ContractViolation as err:
        raise ConfigError("instruments", str(err)) from None
    lsm = _lsm(doc, portfolio.labels)

    pr = _section(doc, "pricing", required=False)
    _unknown(pr, {"paths", "seed"}, "pricing")
    pricing_paths = _get(pr, "paths", "pricing", int, 1_000_000)
    if pricing_paths < 2:
        raise ConfigError("pricing.paths", "must be >= 2")

    pn = _section(doc, "pnl", required=False)
    _unknown(pn, {"horizons", "paths", "seed"}, "pnl")
    horizons = []
    for i, h in enumerate(_get(pn, "horizons", "pnl", list, [])):
        loc = f"pnl.horizons[{i}]"
        if isinstance(h, bool) or not isinstance(h, (int, float)):
            raise ConfigError(loc, "expected a time in years")
        try:
            horizons.append(grid.index_of(float(h), tol=HORIZON_TOL))
        except ContractViolation:
            raise ConfigError(loc, f"horizon {h} is not a grid date (grid step {grid.dt(0):.6g} years)") from None
    pnl_paths = _get(pn, "paths", "pnl", int, 1_000_000)
    if pnl_paths < 1:
        raise ConfigError("pnl.paths", "must be >= 1")

    rep = _section(doc, "report", required=False)
    _unknown(rep, {"scale"}, "report")
    return RunConfig(
        portfolio=portfolio,
        lsm=lsm,
        pricing_paths=pricing_paths,
        pricing_seed=_get(pr, "seed", "pricing", int, lsm.seed + 1),
        pnl_horizons=tuple(horizons),
        pnl_paths=pnl_paths,
        pnl_seed=_get(pn, "seed", "pnl", int, lsm.seed + 2),
        output_dir=str(_get(doc, "output_dir", "", str, "out")),
        report_scale=_get(rep, "scale", "report", float, 1.0),
        benchmark=_benchmark(doc),
        raw=doc,
    )


def parse_config(path: str | Path) -> RunConfig:
    """Read and validate a YAML run configuration."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError("<file>", f"cannot read {p}: {err.strerror}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f"<line {mark.line + 1}>" if mark is not None else "<file>"
        raise ConfigError(where, f"invalid YAML: {getattr(err, 'problem', err)}") from None
    return config_from_dict(doc)
