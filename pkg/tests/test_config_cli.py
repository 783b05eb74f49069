import json

import pytest

from iparts.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from iparts.config import ExperimentConfig, config_to_dict, parse_config
from iparts.market import ConfigError, Scenario

SMALL = {"schema_version": 1, "scenario": {"n_tasks": 3, "n_workers": 10},
         "variants": ["iParts", "Greedy"], "seeds": [0, 1],
         "attack": {"T_grid": [1, 5], "replications": 2}}


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_defaults_round_trip():
    cfg = ExperimentConfig()
    assert parse_config(config_to_dict(cfg)) == cfg
    cfg2 = parse_config(SMALL)
    assert parse_config(config_to_dict(cfg2)) == cfg2
    assert cfg2.with_seed_offset(10).seeds == (10, 11)


@pytest.mark.parametrize("doc, where", [
    ({"schema_version": 2}, "schema_version"),
    ({"schema_version": 1, "scenario": {"n_tasks": 0}}, "scenario/n_tasks"),
    ({"schema_version": 1, "planner": {"M": "many"}}, "planner/M"),
    ({"schema_version": 1, "variants": ["Bogus"]}, "variants/0"),
    ({"schema_version": 1, "colour": "red"}, "<root>"),
])
def test_schema_errors_name_the_field(doc, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(doc)


def test_semantic_errors():
    with pytest.raises(ConfigError):
        parse_config({"schema_version": 1, "scenario": {"payment": [60, 50]}})
    with pytest.raises(ConfigError):
        parse_config({"schema_version": 1, "seeds": [0], "replications": 3})
    assert parse_config({"schema_version": 1, "replications": 3}).seeds == (0, 1, 2)


def test_cli_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["simulate"])
    assert e.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == EXIT_USAGE
    bad = _write(tmp_path, {"schema_version": 1, "planner": {"M": 0}})
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["simulate", "--config", str(broken)]) == EXIT_CONFIG
    assert main(["verify", str(tmp_path / "nothing")]) == EXIT_RUNTIME
    cfg = _write(tmp_path, SMALL)
    assert main(["simulate", "--config", str(cfg), "--jobs", "0"]) == EXIT_USAGE


def test_simulate_verify_attack_and_gen(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    ledger = (out / "ledger.csv").read_text().splitlines()
    assert ledger[0].startswith("# generated ")
    assert len(ledger) == 2 + 4
    assert (out / "summary.csv").exists() and (out / "diagnostics.csv").exists()
    assert len(list((out / "profiles").glob("*.json"))) == 4
    log = (out / "logs" / "iParts_w10_s0.csv").read_text().splitlines()
    assert log[0] == "stage,round,task_id,worker_id,direction,bytes"
    capsys.readouterr()
    assert main(["verify", str(out)]) == EXIT_OK
    assert "4/4 runs passed" in capsys.readouterr().out

    doc = json.loads((out / "profiles" / "iParts_w10_s0.json").read_text())
    doc["contracts"][0] = list(range(10))
    (out / "profiles" / "iParts_w10_s0.json").write_text(json.dumps(doc))
    assert main(["verify", str(out)]) == EXIT_RUNTIME
    assert "FAIL iParts_w10_s0" in capsys.readouterr().out

    assert main(["attack", "--config", str(cfg), "--out", str(tmp_path / "att")]) == EXIT_OK
    rows = (tmp_path / "att" / "attack.csv").read_text().splitlines()
    assert rows[1].startswith("algorithm,seed,T,")
    assert len(rows) == 2 + 3 * 2 * 2

    sc = tmp_path / "scenario.json"
    assert main(["gen-scenario", "--config", str(cfg), "--seed", "4", "--out", str(sc)]) == EXIT_OK
    assert Scenario.from_json(sc.read_text()).rng_seed == 4


def test_parallel_matches_serial(tmp_path):
    cfg = _write(tmp_path, SMALL)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--jobs", "2"])
    a = (tmp_path / "a" / "ledger.csv").read_text().splitlines()[1:]
    b = (tmp_path / "b" / "ledger.csv").read_text().splitlines()[1:]
    assert a == b


def test_gen_scenario_from_trace(tmp_path):
    trace = tmp_path / "t.csv"
    trace.write_text("worker_id,day,trip_distance,cur_x,cur_y,post_x,post_y\n"
                     "1,d1,2.0,0.0,0.0,1.0,1.0\n2,d2,1.0,1.0,1.0,0.0,0.0\n")
    out = tmp_path / "s.json"
    assert main(["gen-scenario", "--trace", str(trace), "--out", str(out)]) == EXIT_OK
    assert Scenario.from_json(out.read_text()).n_workers == 2
    trace.write_text("nope\n")
    assert main(["gen-scenario", "--trace", str(trace), "--out", str(out)]) == EXIT_RUNTIME


def test_grouped_runs_match_single_runs():
    from iparts.harness import execute, execute_group
    doc = config_to_dict(parse_config(SMALL))
    names = ("iParts", "ConOff", "NoMem")
    group = execute_group(doc, names, 1, 10)
    for v in names:
        single = execute(doc, v, 1, 10)
        assert single["row"] == group[v]["row"] and single["profile"] == group[v]["profile"]
