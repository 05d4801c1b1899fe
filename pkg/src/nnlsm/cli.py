"""Command-line front end: ``nnlsm {train,price,pnl,benchmark,all}``."""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path


from . import benchmark as bm
from .config import RunConfig, config_from_dict, parse_config
from .errors import ConfigError, ContractViolation, TrainingError
from .lsm import TrainedPolicy, load_policy, save_policy, train_policy
from .pnl import QUANTILE_LEVELS, build_pnl, export_cdf, quantile_table
from .pricing import CSV_COLUMNS, PricingResult, price_with_policy, pricing_rows
from .reports import provenance, write_csv

logger = logging.getLogger("nnlsm")

OUT_ENV = "NNLSM_OUT"
EXIT_CONFIG = 2
EXIT_STAGE = 3


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


def apply_overrides(cfg: RunConfig, seed: int | None, paths: int | None) -> RunConfig:
    if seed is None and paths is None:
        return cfg
    raw = copy.deepcopy(cfg.raw)
    if seed is not None:
        raw.setdefault("lsm", {})["seed"] = seed
        raw.setdefault("pricing", {})["seed"] = seed + 1
        raw.setdefault("pnl", {})["seed"] = seed + 2
    if paths is not None:
        raw.setdefault("pricing", {})["paths"] = paths
        raw.setdefault("pnl", {})["paths"] = paths
    return config_from_dict(raw)


class Runner:
    def __init__(self, cfg: RunConfig, out: Path, workers: int):
        self.cfg = cfg
        self.out = out
        self.workers = workers
        self.lsm = replace(cfg.lsm, workers=workers)
        self.comment = provenance(cfg.config_hash(), cfg.seeds())
        self.done: list[str] = []
        self.policy: TrainedPolicy | None = None
        self.prices: PricingResult | None = None

    @property
    def policy_dir(self) -> Path:
        return self.out / "policy"

    def train(self):
        self.policy = train_policy(self.cfg.portfolio, self.lsm)
        save_policy(self.policy, self.policy_dir)
        print(f"trained {len(self.policy.networks)} networks -> {self.policy_dir}")

    def _need_policy(self) -> TrainedPolicy:
        if self.policy is None:
            if not (self.policy_dir / "manifest.json").exists():
                raise ContractViolation(f"no trained policy in {self.policy_dir}; run 'train' first")
            self.policy = load_policy(self.policy_dir)
            if self.policy.portfolio.fingerprint() != self.cfg.portfolio.fingerprint():
                raise ContractViolation("stored policy was trained for a different portfolio")
        return self.policy

    def price(self):
        policy = self._need_policy()
        self.prices = price_with_policy(policy, self.cfg.pricing_paths, self.cfg.pricing_seed, self.workers)
        rows = [[r[c] for c in CSV_COLUMNS] for r in pricing_rows(self.prices)]
        write_csv(self.out / "prices.csv", CSV_COLUMNS, rows, self.comment)
        scale = self.cfg.report_scale
        print(f"{'asset':<12}{'price':>14}{'stderr':>12}")
        for lab, p, e in zip(self.prices.labels, self.prices.price, self.prices.stderr):
            print(f"{lab:<12}{scale * p:>14.4f}{scale * e:>12.4f}")

    def pnl(self):
        policy = self._need_policy()
        if self.prices is None:
            self.price()
        grid = policy.grid
        for n in self.cfg.pnl_horizons:
            dist = build_pnl(policy, n, self.cfg.pnl_paths, self.cfg.pnl_seed, self.prices, self.workers)
            table = quantile_table(dist)
            header = ("asset", *(f"q{p:g}" for p in QUANTILE_LEVELS))
            write_csv(
                self.out / f"quantiles_h{n:03d}.csv", header,
                [[lab, *vals] for lab, vals in table.items()], self.comment,
            )
            for lab, pts in export_cdf(dist).items():
                write_csv(self.out / f"cdf_h{n:03d}_{lab}.csv", ("pnl", "cdf"), pts.tolist(), self.comment)
            scale = self.cfg.report_scale
            print(f"P&L quantiles at t={grid.dates[n]:.4f}y (x{scale:g})")
            print(f"{'asset':<12}" + "".join(f"{p:>9g}" for p in QUANTILE_LEVELS))
            for lab, vals in table.items():
                print(f"{lab:<12}" + "".join(f"{scale * v:>9.2f}" for v in vals))

    def benchmark(self):
        b = self.cfg.benchmark
        seed = self.cfg.pricing_seed
        L = self.cfg.pricing_paths
        rows = []
        for spot in b.put.spots:
            series = bm.put_series(b.put, spot, self.lsm, L, seed, self.workers)
            for r in series.rows:
                rows.append([f"put S0={spot:g}", r.case, r.dt, r.price, r.stderr, r.n_paths, r.seed])
            rows.append([f"put S0={spot:g}", "extrapolated", 0.0, series.extrapolated, "", "", ""])
            rows.append([f"put S0={spot:g}", "binomial", 0.0, series.binomial, "", b.put.tree_steps, ""])
            print(f"put S0={spot:g}: " + ", ".join(f"{r.case}={r.price:.4f}" for r in series.rows)
                  + f"; dt->0 {series.extrapolated:.4f}; binomial {series.binomial:.4f}")
        write_csv(self.out / "benchmark_put.csv",
                  ("series", "case", "dt", "price", "stderr", "n_paths", "seed"), rows, self.comment)
        mrows = []
        for case in b.max_call.cases:
            r = bm.max_call_row(b.max_call, case, self.lsm, L, seed, self.workers)
            mrows.append([r.n_assets, r.spot, r.price, r.stderr, r.ci[0], r.ci[1],
                          "pass" if r.passed else "fail", r.n_paths, r.seed])
            print(f"max-call d={r.n_assets} S0={r.spot:g}: {r.price:.4f} +- {r.stderr:.4f} "
                  f"vs [{r.ci[0]}, {r.ci[1]}] {'pass' if r.passed else 'FAIL'}")
        write_csv(self.out / "benchmark_maxcall.csv",
                  ("n_assets", "spot", "price", "stderr", "ci_low", "ci_high", "status", "n_paths", "seed"),
                  mrows, self.comment)

    def run(self, command: str) -> None:
        stages = {
            "train": ["train"], "price": ["price"], "pnl": ["pnl"],
            "benchmark": ["benchmark"], "all": ["train", "price", "pnl"],
        }[command]
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "FAILED").unlink(missing_ok=True)
        for stage in stages:
            tic = time.perf_counter()
            try:
                getattr(self, stage)()
            except (ContractViolation, TrainingError, OSError, ValueError) as err:
                (self.out / "FAILED").write_text(json.dumps({"stage": stage, "completed": self.done}) + "\n")
                raise StageFailure(stage, err) from err
            self.done.append(stage)
            logger.info("%s finished in %.1fs", stage, time.perf_counter() - tic)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nnlsm", description=__doc__)
    p.add_argument("command", choices=["train", "price", "pnl", "benchmark", "all"])
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or config output_dir)")
    p.add_argument("--seed", type=int, default=None, help="override all seeds (lsm=N, pricing=N+1, pnl=N+2)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--paths", type=int, default=None, help="override pricing and P&L path counts")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = apply_overrides(parse_config(args.config), args.seed, args.paths)
    except ConfigError as err:
        print(json.dumps({"error": "config", "location": err.location, "message": str(err)}), file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or os.environ.get(OUT_ENV) or cfg.output_dir)
    try:
        Runner(cfg, out, max(1, args.workers)).run(args.command)
    except StageFailure as err:
        payload = {"error": "stage", "stage": err.stage, "message": str(err.cause)}
        if isinstance(err.cause, TrainingError):
            payload.update(epoch=err.cause.epoch, date_index=err.cause.date_index)
        print(json.dumps(payload), file=sys.stderr)
        return EXIT_STAGE
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
