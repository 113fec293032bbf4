import csv
import json
import subprocess
import sys

import pytest

from arocba.cli import ConfigError, config_hash, dump_config, main, parse_config

MM = {"problem": {"kind": "synthetic", "k": 3, "m": 3, "variance": "CV"},
      "procedure": {"name": "AR-OCBA", "n0": 5, "delta": 5},
      "experiment": {"c": [5, 10], "replications": 10, "base_seed": 1}}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run_cli(tmp_path, cfg, *args):
    return main([args[0], "--config", write(tmp_path, cfg), "--jobs", "1", *args[1:]])


def test_run_writes_trace_and_summary(tmp_path, capsys):
    assert run_cli(tmp_path, MM, "run", "--out", str(tmp_path / "a")) == 0
    out = capsys.readouterr().out
    assert "selection=" in out and "N_used=" in out and "wall_time=" in out
    trace = (tmp_path / "a" / "trace.jsonl").read_text().splitlines()
    assert len(trace) > 1 and json.loads(trace[-1])["summary"]
    meta = json.loads((tmp_path / "a" / "trace.jsonl.meta.json").read_text())
    assert meta["seed"] == 1 and meta["config_hash"] and meta["version"]


def test_run_twice_byte_identical(tmp_path):
    assert run_cli(tmp_path, MM, "run", "--out", str(tmp_path / "a")) == 0
    assert run_cli(tmp_path, MM, "run", "--out", str(tmp_path / "b")) == 0
    for name in ("trace.jsonl", "trace.jsonl.meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    run_cli(tmp_path, MM, "run", "--out", str(tmp_path / "a"), "--seed", "99")
    assert json.loads((tmp_path / "a" / "trace.jsonl.meta.json").read_text())["seed"] == 99


def test_bad_n0_exit_2_names_key_and_bound(tmp_path, capsys):
    cfg = json.loads(json.dumps(MM))
    cfg["procedure"]["n0"] = 1
    assert run_cli(tmp_path, cfg, "run") == 2
    err = capsys.readouterr().err
    assert "n0" in err and "≥ 2" in err


def test_empty_c_list_exit_2(tmp_path, capsys):
    cfg = json.loads(json.dumps(MM))
    cfg["experiment"]["c"] = []
    assert run_cli(tmp_path, cfg, "pcs") == 2
    assert "experiment.c" in capsys.readouterr().err


@pytest.mark.parametrize("mutate,needle", [
    (lambda c: c.update(extra=1), "extra"),
    (lambda c: c["problem"].update(colour="red"), "problem.colour"),
    (lambda c: c["procedure"].update(name="R-UCB"), "procedure.name"),
    (lambda c: c["problem"].update(mu=[[1.0]]), "exactly one"),
    (lambda c: c["procedure"].update(rule="most_starving"), "contradicts"),
])
def test_config_rejections(tmp_path, capsys, mutate, needle):
    cfg = json.loads(json.dumps(MM))
    mutate(cfg)
    assert run_cli(tmp_path, cfg, "run") == 2
    assert needle in capsys.readouterr().err


def test_missing_or_broken_config(tmp_path, capsys):
    assert main(["run"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_config_round_trip():
    cfg = parse_config(MM)
    again = parse_config(json.loads(dump_config(cfg)))
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)
    inv = parse_config({"problem": {"kind": "inventory", "s_grid": [700], "S_grid": [1500],
                                    "demand_means": [40]}})
    assert parse_config(json.loads(dump_config(inv))) == inv


def test_config_defaults():
    cfg = parse_config({"problem": {"kind": "synthetic", "preset": "small-3x3"}})
    assert cfg["procedure"] == {"name": "AR-OCBA", "n0": 20, "delta": 20, "rule": "proportional"}
    assert cfg["output"] == {"dir": "out", "format": "csv"}
    with pytest.raises(ConfigError):
        parse_config({"problem": {"kind": "synthetic", "k": 3}})


def test_pcs_csv_structure(tmp_path, capsys):
    assert run_cli(tmp_path, MM, "pcs", "--out", str(tmp_path / "p")) == 0
    err = capsys.readouterr().err
    assert "estimated wall time" in err
    with (tmp_path / "p" / "pcs.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 2
    assert {r["procedure"] for r in rows} == {"AR-OCBA", "AR-OCBA-Starving", "EA"}
    assert (tmp_path / "p" / "pcs.csv.meta.json").exists()


def test_pcs_json_format(tmp_path):
    assert run_cli(tmp_path, MM, "pcs", "--out", str(tmp_path / "p"), "--format", "json") == 0
    data = json.loads((tmp_path / "p" / "pcs.json").read_text())
    assert len(data["rows"]) == 6 and data["failures"] == []


def test_pcs_report_deterministic_except_wall_time(tmp_path):
    for d in ("a", "b"):
        assert run_cli(tmp_path, MM, "pcs", "--out", str(tmp_path / d)) == 0
    strip = lambda p: [r[:-1] for r in csv.reader(p.open())]  # noqa: E731
    assert strip(tmp_path / "a" / "pcs.csv") == strip(tmp_path / "b" / "pcs.csv")


def test_sweep_sensitivity(tmp_path):
    cfg = json.loads(json.dumps(MM))
    cfg["experiment"].update(vary="delta", values=[2, 4], per_scenario=20)
    assert run_cli(tmp_path, cfg, "sweep-sensitivity", "--out", str(tmp_path / "s")) == 0
    rows = list(csv.DictReader((tmp_path / "s" / "sensitivity.csv").open()))
    assert [r["config"] for r in rows] == ["MM-CV delta=2", "MM-CV delta=4"]
    assert all(int(r["N"]) == 20 * 9 for r in rows)


def test_sweep_sensitivity_needs_vary(tmp_path):
    assert run_cli(tmp_path, MM, "sweep-sensitivity") == 2


def test_trace_command(tmp_path):
    assert run_cli(tmp_path, MM, "trace", "--out", str(tmp_path / "t")) == 0
    lines = (tmp_path / "t" / "profile.csv").read_text().splitlines()
    assert lines[0].startswith("t,N_used,n_1_1")


def test_truth_cache_idempotent_and_ambiguity(tmp_path, capsys):
    inv = {"problem": {"kind": "inventory", "s_grid": [700, 750], "S_grid": [1500], "demand_means": [40, 80],
                       "horizon": 60, "truth_reps": 200, "truth_seed": 2}}
    out = str(tmp_path / "inv")
    assert run_cli(tmp_path, inv, "truth", "--out", out) == 0
    assert "rebuilt" in capsys.readouterr().out
    stamp = (tmp_path / "inv" / "truth.csv").stat().st_mtime_ns
    assert run_cli(tmp_path, inv, "truth", "--out", out) == 0
    assert "no recomputation" in capsys.readouterr().out
    assert (tmp_path / "inv" / "truth.csv").stat().st_mtime_ns == stamp
    inv["problem"]["truth_reps"] = 201
    assert run_cli(tmp_path, inv, "truth", "--out", out) == 0
    assert "rebuilt" in capsys.readouterr().out

    amb = {"problem": {"kind": "inventory", "s_grid": [700, 701], "S_grid": [1500], "demand_means": [40],
                       "horizon": 30, "truth_reps": 10}}
    assert run_cli(tmp_path, amb, "truth", "--out", str(tmp_path / "amb")) == 1
    assert "AMBIGUOUS" in capsys.readouterr().out


def test_truth_rejects_synthetic(tmp_path):
    assert run_cli(tmp_path, MM, "truth") == 2


def test_runtime_failure_exit_1(tmp_path, capsys):
    cfg = json.loads(json.dumps(MM))
    cfg["experiment"]["N"] = 10  # below k*m*n0
    assert run_cli(tmp_path, cfg, "run", "--out", str(tmp_path / "x")) == 1
    assert "error" in capsys.readouterr().err


def test_validate_quick_passes(capsys):
    assert main(["validate", "--quick"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] closed-form ratio identities" in out and "all checks passed" in out


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "arocba.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "arocba" in res.stdout
