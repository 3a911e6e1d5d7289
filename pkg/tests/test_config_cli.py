"""Config validation and CLI behavior: exit codes, payload determinism,
CSV shapes, and the validate/run subcommand surface."""

import json

import pytest

from cpsim import cli
from cpsim.config import (ConfigError, RunConfig, load_config, validate_config)
from cpsim.oracle import FiniteGraph, exact_survival
from cpsim.rng import SEED_RULE


def survival_config(**over):
    cfg = {
        "experiment": {"kind": "survival"},
        "region": {"mode": "half-space", "d": 1,
                   "box": {"lo": [-12, 0], "hi": [12, 12]}},
        "env": {"mu": {"kind": "point-mass", "c": 1.0}, "env_seed": 3,
                "regime": "quenched"},
        "params": {"lambda": 1.5, "horizon": 8.0},
        "replicas": 200,
        "seed": 7,
    }
    cfg.update(over)
    return cfg


def write_config(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def run_cli(argv):
    return cli.main(argv)


# --- validation -----------------------------------------------------------------

def test_valid_config_passes():
    assert validate_config(survival_config()) == []


def test_violation_paths_are_json_paths():
    cfg = survival_config()
    cfg["params"]["lambda"] = -1.0
    v = validate_config(cfg)
    assert any(x.path == "$.params.lambda" for x in v)


def test_all_violations_reported_at_once():
    cfg = survival_config()
    cfg["params"]["lambda"] = -1.0
    cfg["replicas"] = 0
    cfg["env"]["mu"] = {"kind": "bernoulli", "p": 2.0}
    paths = {x.path for x in validate_config(cfg)}
    assert {"$.params.lambda", "$.replicas", "$.env.mu.p"} <= paths


def test_semantic_violations():
    cfg = survival_config(experiment={"kind": "critical"})
    assert any(x.path == "$.experiment.bracket" for x in validate_config(cfg))

    cfg = survival_config(experiment={"kind": "sweep", "lambdas": []})
    assert any(x.path == "$.experiment.lambdas" for x in validate_config(cfg))

    cfg = survival_config(experiment={
        "kind": "block-sensitivity", "deltas": [0.0, 2.5],
        "box": {"kind": "S", "a": 6, "b": 6, "r": 1, "tau": 4.0,
                "orientation": "east"}})
    assert any(x.path == "$.experiment.deltas" for x in validate_config(cfg))

    cfg = survival_config(experiment={"kind": "renorm", "epsilon": 0.3,
                                      "ns": [2], "samples": 5})
    assert any(x.path == "$.experiment.boxes" for x in validate_config(cfg))

    cfg = survival_config(experiment={
        "kind": "oracle", "graph": {"n": 20, "edges": []}, "t": 1.0,
        "init": [0]})
    assert any(x.path == "$.experiment.graph.n" for x in validate_config(cfg))

    cfg = survival_config(experiment={
        "kind": "oracle", "graph": {"n": 3, "edges": []}, "t": 1.0})
    assert any(x.path == "$.experiment.init" for x in validate_config(cfg))

    cfg = survival_config(experiment={"kind": "c2", "t": 2.0})
    assert any(x.path == "$.experiment.m" for x in validate_config(cfg))

    cfg = survival_config(experiment={"kind": "c1"})
    assert any(x.path == "$.experiment.t" for x in validate_config(cfg))


def test_config_round_trip():
    obj = survival_config()
    cfg = RunConfig.from_dict(obj)
    again = RunConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


def test_config_error_carries_everything():
    cfg = survival_config()
    cfg["params"]["lambda"] = -1.0
    cfg["replicas"] = 0
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict(cfg)
    assert len(exc.value.violations) >= 2
    assert "$.params.lambda" in str(exc.value)


def test_load_config_malformed_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "experiment": {\n oops\n}\n}')
    with pytest.raises(ConfigError) as exc:
        load_config(str(path))
    assert "line 3" in str(exc.value)


# --- validate subcommand -------------------------------------------------------------

def test_cli_validate_ok(tmp_path, capsys):
    path = write_config(tmp_path, survival_config())
    assert run_cli(["validate", "--config", path]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_cli_validate_bad_exit_2(tmp_path, capsys):
    cfg = survival_config()
    cfg["params"]["lambda"] = -2
    path = write_config(tmp_path, cfg)
    assert run_cli(["validate", "--config", path]) == 2
    assert "$.params.lambda" in capsys.readouterr().out


def test_cli_validate_json_format(tmp_path, capsys):
    cfg = survival_config()
    del cfg["params"]
    path = write_config(tmp_path, cfg)
    assert run_cli(["validate", "--config", path, "--format", "json"]) == 2
    payload = json.loads(capsys.readouterr().out)
    assert payload["violations"]


def test_cli_validate_unreadable(tmp_path, capsys):
    assert run_cli(["validate", "--config", str(tmp_path / "nope.json")]) == 2


# --- run ------------------------------------------------------------------------------

def test_cli_run_survival_record(tmp_path):
    path = write_config(tmp_path, survival_config())
    out = tmp_path / "out.json"
    assert run_cli(["run", "--config", path, "--out", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert rec["seed_rule"] == SEED_RULE
    assert rec["version"]
    assert rec["config"]["experiment"]["kind"] == "survival"
    assert 0.0 <= rec["results"]["value"] <= 1.0
    assert rec["results"]["replicas"] == 200


def test_cli_named_subcommand_matches_kind(tmp_path, capsys):
    path = write_config(tmp_path, survival_config())
    out = tmp_path / "out.json"
    assert run_cli(["survival", "--config", path, "--out", str(out)]) == 0
    # and the mismatched command refuses
    assert run_cli(["critical", "--config", path, "--out", str(out)]) == 2
    assert "expects" in capsys.readouterr().err


def test_cli_sweep_only_via_run(tmp_path):
    cfg = survival_config(experiment={"kind": "sweep",
                                      "lambdas": [0.5, 1.0, 1.5]},
                          replicas=100)
    path = write_config(tmp_path, cfg)
    with pytest.raises(SystemExit):
        run_cli(["sweep", "--config", path])
    out = tmp_path / "sweep.json"
    assert run_cli(["run", "--config", path, "--out", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert len(rec["results"]["rows"]) == 3


def test_cli_seed_override(tmp_path):
    path = write_config(tmp_path, survival_config())
    outs = []
    for seed in (101, 202):
        out = tmp_path / f"s{seed}.json"
        assert run_cli(["run", "--config", path, "--out", str(out),
                        "--seed", str(seed)]) == 0
        outs.append(json.loads(out.read_text()))
    assert outs[0]["config"]["seed"] == 101
    assert outs[1]["config"]["seed"] == 202
    assert outs[0]["results"]["value"] != outs[1]["results"]["value"]


def test_cli_runtime_failure_exit_3(tmp_path, capsys):
    # valid by schema, fails in the estimator: hit needs the quenched regime
    cfg = survival_config(experiment={"kind": "hit", "a": [[0, 0]],
                                      "b": [[1, 0]], "t": 1.0})
    cfg["env"]["regime"] = "annealed"
    path = write_config(tmp_path, cfg)
    assert run_cli(["run", "--config", path]) == 3
    assert "quenched" in capsys.readouterr().err


def test_cli_budget_flag_reaches_kernel(tmp_path):
    cfg = survival_config(params={"lambda": 4.0, "horizon": 50.0}, replicas=40)
    path = write_config(tmp_path, cfg)
    out = tmp_path / "budget.json"
    assert run_cli(["run", "--config", path, "--out", str(out),
                    "--budget", "30"]) == 0
    rec = json.loads(out.read_text())
    assert rec["results"]["diagnostics"]["budget_exceeded"] > 0
    assert rec["results"]["value"] == 0.0


# --- worker determinism -----------------------------------------------------------------

def payload_bytes(path):
    rec = json.loads(path.read_text())
    return json.dumps(rec["results"], sort_keys=True).encode()


@pytest.mark.parametrize("kind_cfg", [
    ("survival", {}),
    ("sweep", {"experiment": {"kind": "sweep", "lambdas": [0.8, 1.6]},
               "env": {"mu": {"kind": "uniform", "a": 0.5, "b": 1.5},
                       "regime": "annealed"}}),
    ("renorm", {"experiment": {
        "kind": "renorm", "epsilon": 0.35, "ns": [1, 2], "samples": 10,
        "boxes": {"S": {"kind": "S", "a": 6, "b": 6, "r": 1, "tau": 6.0,
                        "orientation": "east"},
                  "L": {"kind": "L", "a": 12, "b": 6, "r": 1, "tau": 6.0,
                        "orientation": "north"}}},
        "params": {"lambda": 4.0, "horizon": 1.0}}),
])
def test_cli_worker_count_never_changes_results(tmp_path, kind_cfg):
    kind, over = kind_cfg
    cfg = survival_config(**over)
    path = write_config(tmp_path, cfg)
    payloads = set()
    for w in (1, 4, 8):
        out = tmp_path / f"{kind}-w{w}.json"
        assert run_cli(["run", "--config", path, "--out", str(out),
                        "--workers", str(w)]) == 0
        payloads.add(payload_bytes(out))
    assert len(payloads) == 1


# --- CSV shapes ----------------------------------------------------------------------------

def test_cli_sweep_csv(tmp_path):
    cfg = survival_config(experiment={"kind": "sweep", "lambdas": [0.5, 1.5]},
                          replicas=100)
    path = write_config(tmp_path, cfg)
    out = tmp_path / "sweep.csv"
    assert run_cli(["run", "--config", path, "--out", str(out),
                    "--format", "csv"]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "lambda,t,estimate,stderr,replicas"
    assert len(lines) == 3


def test_cli_renorm_csv(tmp_path):
    cfg = survival_config(experiment={
        "kind": "renorm", "epsilon": 0.35, "ns": [1, 2], "samples": 4,
        "boxes": {"S": {"kind": "S", "a": 1, "b": 1, "r": 0, "tau": 1.0,
                        "orientation": "east"},
                  "L": {"kind": "L", "a": 1, "b": 1, "r": 0, "tau": 1.0,
                        "orientation": "north"}}},
        params={"lambda": 4.0, "horizon": 1.0})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "renorm.csv"
    assert run_cli(["run", "--config", path, "--out", str(out),
                    "--format", "csv"]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "n,sample_index,T,success"
    assert len(lines) == 1 + 2 * 4


def test_cli_sensitivity_csv(tmp_path):
    cfg = survival_config(experiment={
        "kind": "block-sensitivity", "deltas": [0.0, 1.0],
        "box": {"kind": "S", "a": 6, "b": 6, "r": 1, "tau": 4.0,
                "orientation": "east"}},
        params={"lambda": 2.0, "horizon": 1.0}, replicas=60)
    path = write_config(tmp_path, cfg)
    out = tmp_path / "sens.csv"
    assert run_cli(["run", "--config", path, "--out", str(out),
                    "--format", "csv"]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "delta,estimate,stderr,replicas"
    assert len(lines) == 3


def test_cli_renorm_fit_csv(tmp_path):
    cfg = survival_config(experiment={
        "kind": "renorm-fit", "epsilon": 0.35, "ns": [1, 2, 3], "samples": 30,
        "boxes": {"S": {"kind": "S", "a": 6, "b": 6, "r": 1, "tau": 6.0,
                        "orientation": "east"},
                  "L": {"kind": "L", "a": 12, "b": 6, "r": 1, "tau": 6.0,
                        "orientation": "north"}}},
        params={"lambda": 4.0, "horizon": 1.0})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "fit.csv"
    assert run_cli(["run", "--config", path, "--out", str(out),
                    "--format", "csv", "--workers", "4"]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "n,count,median,ratio,inside_fraction"
    assert len(lines) == 4


def test_cli_csv_rejected_for_scalar_experiments(tmp_path, capsys):
    path = write_config(tmp_path, survival_config())
    assert run_cli(["run", "--config", path, "--format", "csv"]) == 2
    assert "no CSV form" in capsys.readouterr().err


# --- oracle through the CLI -------------------------------------------------------------

def test_cli_oracle_payload(tmp_path):
    graph = {"n": 4, "edges": [[0, 1, 1.0], [1, 2, 1.0], [2, 3, 1.0],
                               [0, 3, 1.0]]}
    cfg = {
        "experiment": {"kind": "oracle", "graph": graph, "init": [0],
                       "t": 2.0, "op": "survival"},
        "env": {"mu": {"kind": "point-mass", "c": 1.0}},
        "params": {"lambda": 2.0, "horizon": 2.0},
    }
    path = write_config(tmp_path, cfg)
    out = tmp_path / "oracle.json"
    assert run_cli(["run", "--config", path, "--out", str(out)]) == 0
    res = json.loads(out.read_text())["results"]
    assert set(res) == {"graph", "params", "t", "value", "error_bound"}
    ref, bound = exact_survival(
        FiniteGraph(n=4, edges=((0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0),
                                (0, 3, 1.0))), 2.0, [0], 2.0)
    assert res["value"] == pytest.approx(ref, abs=1e-12)
    assert res["error_bound"] <= 1e-8


# --- worker resolution -------------------------------------------------------------------

def test_worker_resolution_order(monkeypatch):
    monkeypatch.setenv("CPSIM_WORKERS", "6")
    assert cli._resolve_workers(2, 4) == 2
    assert cli._resolve_workers(None, 4) == 4
    assert cli._resolve_workers(None, None) == 6
    monkeypatch.setenv("CPSIM_WORKERS", "junk")
    assert cli._resolve_workers(None, None) == 1
    monkeypatch.delenv("CPSIM_WORKERS")
    assert cli._resolve_workers(None, None) == 1
