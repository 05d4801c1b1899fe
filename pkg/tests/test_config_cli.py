import json
from pathlib import Path

import pytest
import yaml

from nnlsm.cli import main
from nnlsm.config import config_from_dict, parse_config
from nnlsm.errors import ConfigError
from nnlsm.instruments import Kind
from nnlsm.reports import read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = {
    "model": {"r": 0.05, "assets": [
        {"name": "x", "spot": 1.0, "sigma": 0.2, "dividend": 0.03},
        {"name": "y", "spot": 1.0, "sigma": 0.2, "dividend": 0.03},
    ]},
    "grid": {"maturity": 1.0, "steps": 4},
    "instruments": [
        {"kind": "american_put", "label": "AM", "strike": 1.0, "underlying": ["x"]},
        {"kind": "european_call_on_min", "label": "Cm", "strike": 0.9, "underlying": ["x", "y"]},
    ],
    "lsm": {"outer_paths": 2000, "inner_paths": 4, "seed": 5, "train": {"max_epochs": 30}},
    "pricing": {"paths": 3000},
    "pnl": {"horizons": [0.25, 1.0], "paths": 3000},
    "report": {"scale": 100},
}


def write(tmp_path, doc, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return p


def with_changes(doc, path, value):
    doc = json.loads(json.dumps(doc))
    node = doc
    *head, last = path
    for key in head:
        node = node[key]
    node[last] = value
    return doc


class TestParse:
    def test_minimal_put_defaults(self):
        cfg = parse_config(CONFIGS / "put_minimal.yaml")
        assert cfg.portfolio.size == 1 and cfg.portfolio.grid.n_steps == 12
        assert cfg.lsm.n_outer_paths == 50_000 and cfg.lsm.m_inner == 16
        assert cfg.lsm.train.hidden == (10, 10)
        assert cfg.pricing_paths == 1_000_000
        assert cfg.seeds() == {"lsm": 0, "pricing": 1, "pnl": 2}
        assert cfg.pnl_horizons == ()
        assert cfg.portfolio.params.delta == (0.0,)

    def test_one_year_portfolio_parameters(self):
        cfg = parse_config(CONFIGS / "portfolio_1y.yaml")
        pf = cfg.portfolio
        assert [i.kind for i in pf.instruments] == [Kind.AMERICAN_PUT, Kind.EUROPEAN_CALL_ON_MIN, Kind.BERMUDA_CALL_ON_MAX]
        assert [i.strike for i in pf.instruments] == [1.0, 0.9, 1.0]
        assert [i.underlying for i in pf.instruments] == [(0,), (0, 1), (0, 1, 2)]
        assert pf.params.sigma == (0.2,) * 3 and pf.params.delta == (0.03,) * 3
        assert pf.params.r == 0.05 and pf.params.s0 == (1.0,) * 3
        assert pf.grid.n_steps == 12 and pf.grid.maturity == 1.0
        assert pf.instruments[2].exercise_dates == tuple(range(1, 13))
        assert pf.instruments[1].exercise_dates == (12,)
        assert cfg.pnl_horizons == (1, 6) and cfg.report_scale == 100

    def test_three_year_portfolio_parameters(self):
        cfg = parse_config(CONFIGS / "portfolio_3y.yaml")
        pf = cfg.portfolio
        assert [i.strike for i in pf.instruments] == [1.0, 1.0, 1.0]
        assert pf.params.delta == (0.1,) * 3 and pf.grid.dates[1] == pytest.approx(1 / 3)
        assert cfg.pnl_horizons == (1, 6)

    @pytest.mark.parametrize("name", ["benchmark", "benchmark_dividend"])
    def test_benchmark_configs(self, name):
        b = parse_config(CONFIGS / f"{name}.yaml").benchmark
        assert b.put.dates_per_year == (6, 12, 26, 52)
        assert b.max_call.n_dates == 9 and b.max_call.dividend == 0.10
        assert [c.ci for c in b.max_call.cases] == [(13.880, 13.910), (18.673, 18.699)]

    def test_itm_only_labels(self):
        assert config_from_dict(SMALL).lsm.itm_only == ()
        cfg = config_from_dict(with_changes(SMALL, ["lsm", "itm_only"], ["AM"]))
        assert cfg.lsm.itm_only == ("AM",)

    def test_horizon_off_grid_is_rejected(self):
        with pytest.raises(ConfigError) as err:
            config_from_dict(with_changes(SMALL, ["pnl", "horizons"], [0.3]))
        assert err.value.location == "pnl.horizons[0]"
        assert "not a grid date" in str(err.value)

    @pytest.mark.parametrize("path,value,where", [
        (["grid", "steps"], "twelve", "grid.steps"),
        (["grid", "steps"], 0, "grid.steps"),
        (["model", "assets", 0, "sigma"], -0.1, "model.assets[0].sigma"),
        (["instruments", 1, "underlying"], ["x", "w"], "instruments[1].underlying[1]"),
        (["instruments", 0, "kind"], "asian", "instruments[0].kind"),
        (["instruments", 0, "strikes"], 1.0, "instruments[0].strikes"),
        (["lsm", "train", "activation"], "relu", "lsm.train.activation"),
        (["lsm", "itm_only"], ["AM", "bCM"], "lsm.itm_only[1]"),
        (["lsm", "itm_only"], "AM", "lsm.itm_only"),
        (["schema_version"], 2, "schema_version"),
    ])
    def test_errors_name_the_field(self, path, value, where):
        with pytest.raises(ConfigError) as err:
            config_from_dict(with_changes(SMALL, path, value))
        assert err.value.location == where

    def test_missing_required_fields(self):
        doc = json.loads(json.dumps(SMALL))
        del doc["model"]["r"]
        with pytest.raises(ConfigError) as err:
            config_from_dict(doc)
        assert err.value.location == "model.r"
        doc = json.loads(json.dumps(SMALL))
        del doc["grid"]
        with pytest.raises(ConfigError):
            config_from_dict(doc)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "nope.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("model: [unclosed")
        with pytest.raises(ConfigError):
            parse_config(bad)

    def test_hash_tracks_content(self):
        a = config_from_dict(SMALL)
        b = config_from_dict(with_changes(SMALL, ["pricing", "paths"], 4000))
        assert a.config_hash() == config_from_dict(json.loads(json.dumps(SMALL))).config_hash()
        assert a.config_hash() != b.config_hash()


def outputs(folder):
    return {p.name: p.read_bytes() for p in sorted(Path(folder).glob("*.csv"))}


@pytest.fixture(scope="module")
def all_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write(root, SMALL)
    assert main(["all", "--config", str(cfg), "--out", str(root / "a"), "--workers", "1"]) == 0
    return root, cfg


class TestCli:
    def test_all_writes_artifacts(self, all_run):
        root, _ = all_run
        out = root / "a"
        names = set(outputs(out))
        assert {"prices.csv", "quantiles_h001.csv", "quantiles_h004.csv",
                "cdf_h001_portfolio.csv", "cdf_h001_AM.csv", "cdf_h004_Cm.csv"} <= names
        assert (out / "policy" / "manifest.json").exists()
        assert not (out / "FAILED").exists()
        comment, rows = read_csv(out / "prices.csv")
        cfg = parse_config(root / "cfg.yaml")
        assert comment == f"# config_hash={cfg.config_hash()} seeds=lsm:5,pricing:6,pnl:7"
        assert [r["label"] for r in rows] == ["AM", "Cm"]
        assert list(rows[0]) == ["label", "price", "stderr", "n_paths", "seed"]
        _, q = read_csv(out / "quantiles_h001.csv")
        assert [r["asset"] for r in q] == ["portfolio", "AM", "Cm"]
        _, cdf = read_csv(out / "cdf_h001_portfolio.csv")
        assert len(cdf) == 3000 and float(cdf[-1]["cdf"]) == 1.0

    def test_rerun_is_byte_identical(self, all_run):
        root, cfg = all_run
        assert main(["all", "--config", str(cfg), "--out", str(root / "b"), "--workers", "2"]) == 0
        assert outputs(root / "a") == outputs(root / "b")
        assert (root / "a/policy/manifest.json").read_bytes() == (root / "b/policy/manifest.json").read_bytes()

    def test_train_then_price_matches_all(self, all_run):
        root, cfg = all_run
        out = str(root / "c")
        assert main(["train", "--config", str(cfg), "--out", out]) == 0
        assert main(["price", "--config", str(cfg), "--out", out]) == 0
        assert main(["pnl", "--config", str(cfg), "--out", out]) == 0
        assert outputs(root / "a") == outputs(out)

    def test_seed_and_paths_overrides(self, all_run, tmp_path):
        _, cfg = all_run
        assert main(["all", "--config", str(cfg), "--out", str(tmp_path), "--seed", "40", "--paths", "500"]) == 0
        comment, rows = read_csv(tmp_path / "prices.csv")
        assert "seeds=lsm:40,pricing:41,pnl:42" in comment
        assert rows[0]["n_paths"] == "500" and rows[0]["seed"] == "41"

    def test_output_dir_from_environment(self, all_run, tmp_path, monkeypatch):
        _, cfg = all_run
        monkeypatch.setenv("NNLSM_OUT", str(tmp_path / "env"))
        assert main(["train", "--config", str(cfg)]) == 0
        assert (tmp_path / "env" / "policy" / "manifest.json").exists()

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = write(tmp_path, with_changes(SMALL, ["pnl", "horizons"], [0.3]))
        assert main(["all", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "config" and err["location"] == "pnl.horizons[0]"

    def test_price_without_policy_fails_cleanly(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL)
        assert main(["price", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
        err = json.loads(capsys.readouterr().err)
        assert err["stage"] == "price"
        assert json.loads((tmp_path / "o" / "FAILED").read_text())["stage"] == "price"

    def test_policy_for_other_portfolio_is_refused(self, all_run, tmp_path):
        root, _ = all_run
        other = write(tmp_path, with_changes(SMALL, ["instruments", 0, "strike"], 1.1))
        assert main(["price", "--config", str(other), "--out", str(root / "a")]) == 3

    def test_benchmark_writes_both_tables(self, tmp_path):
        doc = with_changes(SMALL, ["benchmark"], {
            "put": {"dates_per_year": [2, 4], "tree_steps": 400},
            "max_call": {"n_dates": 3, "cases": [{"n_assets": 2, "spot": 100.0, "ci": [13.88, 13.91]}]},
        })
        cfg = write(tmp_path, doc)
        assert main(["benchmark", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        _, put = read_csv(tmp_path / "o" / "benchmark_put.csv")
        assert [r["case"] for r in put] == ["2/y", "4/y", "extrapolated", "binomial"]
        _, mc = read_csv(tmp_path / "o" / "benchmark_maxcall.csv")
        assert len(mc) == 1 and mc[0]["status"] in {"pass", "fail"}
