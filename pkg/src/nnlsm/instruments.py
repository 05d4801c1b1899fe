"""Payoff families, exercise schedules and the portfolio container."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .market import ModelParams, TimeGrid


class Kind(str, enum.Enum):
    AMERICAN_PUT = "american_put"
    EUROPEAN_CALL_ON_MIN = "european_call_on_min"
    BERMUDA_CALL_ON_MAX = "bermuda_call_on_max"
    # validation only, checked against closed forms
    EUROPEAN_VANILLA = "european_vanilla"


EUROPEAN_KINDS = frozenset({Kind.EUROPEAN_CALL_ON_MIN, Kind.EUROPEAN_VANILLA})


@dataclass(frozen=True)
class Instrument:
    """A single-payoff claim.

    ``exercise_dates`` holds grid indices (``0`` excluded: there is no
    exercise at the valuation date); its last entry must be the maturity
    index. ``is_call`` only matters for ``EUROPEAN_VANILLA``.
    """

    kind: Kind
    strike: float
    underlying: tuple[int, ...]
    exercise_dates: tuple[int, ...]
    label: str = ""
    is_call: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "underlying", tuple(int(i) for i in self.underlying))
        object.__setattr__(self, "exercise_dates", tuple(sorted({int(n) for n in self.exercise_dates})))
        if not self.label:
            object.__setattr__(self, "label", self.kind.value)
        if not self.strike > 0:
            raise ContractViolation(f"{self.label}: strike must be positive")
        if not self.exercise_dates or self.exercise_dates[0] < 1:
            raise ContractViolation(f"{self.label}: exercise dates must be grid indices >= 1")
        n_und = len(self.underlying)
        if self.kind in (Kind.AMERICAN_PUT, Kind.EUROPEAN_VANILLA) and n_und != 1:
            raise ContractViolation(f"{self.label}: {self.kind.value} takes exactly one underlying")
        if self.kind in (Kind.EUROPEAN_CALL_ON_MIN, Kind.BERMUDA_CALL_ON_MAX) and n_und < 2:
            raise ContractViolation(f"{self.label}: {self.kind.value} needs at least two underlyings")
        if self.kind in EUROPEAN_KINDS and len(self.exercise_dates) != 1:
            raise ContractViolation(f"{self.label}: European claims exercise at maturity only")

    @property
    def maturity_index(self) -> int:
        return self.exercise_dates[-1]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value, "strike": self.strike, "underlying": list(self.underlying),
            "exercise_dates": list(self.exercise_dates), "label": self.label, "is_call": self.is_call,
        }


def intrinsic_value(inst: Instrument, state) -> np.ndarray | float:
    """Exercise cash flow for price vector(s) ``state`` (asset axis last)."""
    s = np.asarray(state, dtype=float)
    if max(inst.underlying) >= s.shape[-1]:
        raise ContractViolation(
            f"{inst.label}: state has {s.shape[-1]} assets, needs index {max(inst.underlying)}"
        )
    und = s[..., list(inst.underlying)]
    k = inst.strike
    if inst.kind is Kind.AMERICAN_PUT:
        out = np.maximum(k - und[..., 0], 0.0)
    elif inst.kind is Kind.EUROPEAN_CALL_ON_MIN:
        out = np.maximum(und.min(axis=-1) - k, 0.0)
    elif inst.kind is Kind.BERMUDA_CALL_ON_MAX:
        out = np.maximum(und.max(axis=-1) - k, 0.0)
    elif inst.kind is Kind.EUROPEAN_VANILLA:
        x = und[..., 0]
        out = np.maximum(x - k, 0.0) if inst.is_call else np.maximum(k - x, 0.0)
    else:  # pragma: no cover - enum is closed
        raise ContractViolation(f"unknown instrument kind {inst.kind!r}")
    return float(out) if out.ndim == 0 else out


def is_exercisable(inst: Instrument, date_index: int) -> bool:
    return int(date_index) in inst.exercise_dates


def every(grid: TimeGrid, step: int) -> tuple[int, ...]:
    """Every ``step``-th grid index counted back from maturity (maturity included)."""
    if step < 1:
        raise ContractViolation("schedule step must be >= 1")
    return tuple(sorted(range(grid.n_steps, 0, -step)))


def american_put(strike: float, asset: int, dates, label: str = "AM") -> Instrument:
    return Instrument(Kind.AMERICAN_PUT, strike, (asset,), tuple(dates), label)


def call_on_min(strike: float, assets, maturity_index: int, label: str = "Cm") -> Instrument:
    return Instrument(Kind.EUROPEAN_CALL_ON_MIN, strike, tuple(assets), (maturity_index,), label)


def call_on_max(strike: float, assets, dates, label: str = "bCM") -> Instrument:
    return Instrument(Kind.BERMUDA_CALL_ON_MAX, strike, tuple(assets), tuple(dates), label)


def european(strike: float, asset: int, maturity_index: int, call: bool = True, label: str = "") -> Instrument:
    return Instrument(
        Kind.EUROPEAN_VANILLA, strike, (asset,), (maturity_index,),
        label or ("call" if call else "put"), call,
    )


@dataclass(frozen=True)
class Portfolio:
    instruments: tuple[Instrument, ...]
    grid: TimeGrid
    params: ModelParams

    def __post_init__(self):
        object.__setattr__(self, "instruments", tuple(self.instruments))
        if not self.instruments:
            raise ContractViolation("a portfolio needs at least one instrument")
        labels = [i.label for i in self.instruments]
        if len(set(labels)) != len(labels):
            raise ContractViolation(f"duplicate instrument labels {labels}")
        N = self.grid.n_steps
        for inst in self.instruments:
            if inst.maturity_index != N:
                raise ContractViolation(
                    f"{inst.label}: matures at index {inst.maturity_index}, grid ends at {N}"
                )
            if max(inst.underlying) >= self.params.n_assets or min(inst.underlying) < 0:
                raise ContractViolation(f"{inst.label}: underlying index out of range")

    @property
    def size(self) -> int:
        return len(self.instruments)

    @property
    def labels(self) -> list[str]:
        return [i.label for i in self.instruments]

    def exercise_mask(self) -> np.ndarray:
        """Boolean ``(n_dates, K)``: may instrument k be exercised at date n."""
        mask = np.zeros((self.grid.n_steps + 1, self.size), dtype=bool)
        for k, inst in enumerate(self.instruments):
            mask[list(inst.exercise_dates), k] = True
        return mask

    def intrinsic(self, states) -> np.ndarray:
        """Exercise values of all instruments, shape ``states.shape[:-1] + (K,)``."""
        return np.stack([np.asarray(intrinsic_value(i, states)) for i in self.instruments], axis=-1)

    def subset(self, k: int) -> "Portfolio":
        return Portfolio((self.instruments[k],), self.grid, self.params)

    def describe(self) -> dict:
        return {
            "params": {
                "r": self.params.r, "delta": list(self.params.delta),
                "sigma": list(self.params.sigma), "s0": list(self.params.s0),
            },
            "grid": list(self.grid.dates),
            "instruments": [i.to_dict() for i in self.instruments],
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
