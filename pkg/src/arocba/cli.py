"""Command-line harness: single runs, PCS sweeps, sensitivity sweeps, allocation
profiles, the self-check suite and the inventory truth cache.

Every command reads one JSON config document (see ``CONFIG_SCHEMA``); the
``--seed``, ``--jobs``, ``--out`` and ``--format`` flags override the
matching config keys. Exit status is 0 on success, 1 on a runtime failure
and 2 on a config error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import jsonschema

from . import __version__
from .experiments import (CsvReportWriter, ExperimentReport, SweepSpec, allocation_profile,
                          budget_sweep, sensitivity_sweep, write_metadata)
from .problems import (VARIANCE_KINDS, build_inventory_problem, estimate_truth, make_custom,
                       make_synthetic, read_truth_cache, small_instance, write_truth_cache)
from .procedures import PROCEDURES, ProcedureConfig, Rule, run_meta_ocba, run_procedure

_int = {"type": "integer"}
_num = {"type": "number"}
_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _num}}

PROBLEM_SCHEMAS = {
    "synthetic": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "kind": {"const": "synthetic"},
            "k": {**_int, "minimum": 2},
            "m": {**_int, "minimum": 1},
            "variance": {"enum": list(VARIANCE_KINDS)},
            "preset": {"enum": ["small-3x3"]},
            "mu": _matrix,
            "sigma2": _matrix,
            "label": {"type": "string"},
        },
    },
    "inventory": {
        "type": "object",
        "additionalProperties": False,
        "required": ["s_grid", "S_grid", "demand_means"],
        "properties": {
            "kind": {"const": "inventory"},
            "s_grid": {"type": "array", "minItems": 1, "items": {**_num, "minimum": 0}},
            "S_grid": {"type": "array", "minItems": 1, "items": {**_num, "minimum": 0}},
            "demand_means": {"type": "array", "minItems": 1, "items": {**_num, "exclusiveMinimum": 0}},
            "horizon": {**_int, "minimum": 1},
            "holding_cost": {**_num, "minimum": 0},
            "fixed_order_cost": {**_num, "minimum": 0},
            "unit_cost": {**_num, "minimum": 0},
            "lead_time_mean": {**_num, "minimum": 0},
            "initial_inventory": {"type": ["number", "null"]},
            "truth_reps": {**_int, "minimum": 2},
            "truth_seed": {**_int, "minimum": 0},
            "truth_cache": {"type": "string"},
            "label": {"type": "string"},
        },
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["problem"],
    "properties": {
        "problem": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": sorted(PROBLEM_SCHEMAS)}},
        },
        "procedure": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"enum": list(PROCEDURES)},
                "n0": {**_int, "minimum": 2},
                "delta": {**_int, "minimum": 1},
                "rule": {"enum": [r.value for r in Rule]},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "c": {"type": "array", "minItems": 1, "items": {**_int, "minimum": 1}},
                "N": {**_int, "minimum": 1},
                "replications": {**_int, "minimum": 1},
                "base_seed": {**_int, "minimum": 0},
                "procedures": {"type": "array", "minItems": 1, "items": {"enum": list(PROCEDURES)}},
                "vary": {"enum": ["n0", "delta"]},
                "values": {"type": "array", "minItems": 1, "items": {**_int, "minimum": 1}},
                "per_scenario": {**_int, "minimum": 2},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "format": {"enum": ["csv", "json"]},
            },
        },
        "jobs": {**_int, "minimum": 1},
    },
}

DEFAULTS = {
    "procedure": {"name": "AR-OCBA", "n0": 20, "delta": 20},
    "experiment": {"c": [10, 20, 30, 40, 50], "replications": 100, "base_seed": 0,
                   "procedures": list(PROCEDURES), "per_scenario": 50},
    "output": {"dir": "out", "format": "csv"},
    "jobs": 1,
}
INVENTORY_DEFAULTS = {"truth_reps": 20_000, "truth_seed": 0}
_RULE_OF = {"AR-OCBA": Rule.PROPORTIONAL.value, "AR-OCBA-Starving": Rule.MOST_STARVING.value}


class ConfigError(ValueError):
    pass


def _key(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def _describe(err: jsonschema.ValidationError, prefix=()) -> str:
    path = (*prefix, *err.absolute_path)
    key = _key(path)
    v, bound = err.validator, err.validator_value
    if v == "minimum":
        return f"{key} must be ≥ {bound} (got {err.instance!r})"
    if v == "exclusiveMinimum":
        return f"{key} must be > {bound} (got {err.instance!r})"
    if v == "minItems":
        return f"{key} must have at least {bound} item(s)"
    if v == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return f"unknown key(s) {', '.join(_key((*path, e)) for e in extra)}"
    if v in ("enum", "const"):
        allowed = bound if v == "enum" else [bound]
        return f"{key} must be one of {allowed} (got {err.instance!r})"
    if v == "required":
        return f"{key}: {err.message}"
    return f"{key}: {err.message}"


def _validate(instance, schema, prefix=()) -> None:
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(instance),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError("; ".join(_describe(e, prefix) for e in errors))


def parse_config(raw: dict) -> dict:
    """Validate a config document and fill in defaults.

    The result is itself a valid config, and parsing it again returns an
    equal structure.
    """
    _validate(raw, CONFIG_SCHEMA)
    kind = raw["problem"]["kind"]
    _validate(raw["problem"], PROBLEM_SCHEMAS[kind], ("problem",))
    cfg = copy.deepcopy(raw)
    for section, values in DEFAULTS.items():
        if isinstance(values, dict):
            cfg[section] = {**values, **cfg.get(section, {})}
        else:
            cfg.setdefault(section, values)
    problem = cfg["problem"]
    if kind == "inventory":
        for key, val in INVENTORY_DEFAULTS.items():
            problem.setdefault(key, val)
    else:
        forms = [("k" in problem or "m" in problem), ("mu" in problem or "sigma2" in problem),
                 "preset" in problem]
        if sum(forms) != 1:
            raise ConfigError("problem: give exactly one of k/m/variance, mu/sigma2, or preset")
        if forms[0]:
            if "k" not in problem or "m" not in problem:
                raise ConfigError("problem: both k and m are required")
            problem.setdefault("variance", "CV")
        elif forms[1] and ("mu" not in problem or "sigma2" not in problem):
            raise ConfigError("problem: both mu and sigma2 are required")
    proc = cfg["procedure"]
    default_rule = _RULE_OF.get(proc["name"])
    if "rule" in proc and proc["rule"] != default_rule:
        raise ConfigError(f"procedure.rule {proc['rule']!r} contradicts procedure.name {proc['name']!r}")
    if default_rule is not None:
        proc["rule"] = default_rule
    exp = cfg["experiment"]
    if "vary" in exp and "values" in exp:
        low = 2 if exp["vary"] == "n0" else 1
        bad = [v for v in exp["values"] if v < low]
        if bad:
            raise ConfigError(f"experiment.values must be ≥ {low} when varying {exp['vary']} (got {bad})")
    return cfg


def dump_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def config_hash(cfg: dict) -> str:
    """Digest of the settings that determine results; output location and
    worker count are left out."""
    core = {k: v for k, v in cfg.items() if k not in ("output", "jobs")}
    return hashlib.sha256(json.dumps(core, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(raw)


def apply_overrides(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    if getattr(args, "seed", None) is not None:
        cfg["experiment"]["base_seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        cfg["jobs"] = args.jobs
    if getattr(args, "out", None) is not None:
        cfg["output"]["dir"] = args.out
    if getattr(args, "format", None) is not None:
        cfg["output"]["format"] = args.format
    return parse_config(cfg)


# --- problem construction ----------------------------------------------------

def problem_label(problem: dict) -> str:
    if "label" in problem:
        return problem["label"]
    if problem["kind"] == "inventory":
        return "Inventory"
    if "preset" in problem:
        return "Small-3x3"
    if "k" in problem:
        return f"MM-{problem['variance']}"
    return "Custom"


def build_problem(problem: dict):
    if problem["kind"] == "synthetic":
        if "preset" in problem:
            return small_instance()
        if "k" in problem:
            return make_synthetic(problem["k"], problem["m"], problem["variance"])
        return make_custom(problem["mu"], problem["sigma2"], problem_label(problem))
    overrides = {key: problem[key] for key in ("horizon", "holding_cost", "fixed_order_cost", "unit_cost",
                                               "lead_time_mean", "initial_inventory") if key in problem}
    return build_inventory_problem(problem["s_grid"], problem["S_grid"], problem["demand_means"], **overrides)


def _truth_path(cfg: dict) -> Path:
    problem = cfg["problem"]
    return Path(problem.get("truth_cache") or Path(cfg["output"]["dir"]) / "truth.csv")


def _truth_key(problem: dict) -> str:
    return config_hash({k: v for k, v in problem.items() if k not in ("truth_cache", "label")})


def ensure_truth(cfg: dict, sim, log=print):
    """Load the inventory truth cache if it matches the problem, else build it.

    Returns (estimate, recomputed).
    """
    path = _truth_path(cfg)
    key = _truth_key(cfg["problem"])
    meta = Path(str(path) + ".meta.json")
    if path.exists() and meta.exists():
        try:
            stored = json.loads(meta.read_text()).get("truth_key")
        except json.JSONDecodeError:
            stored = None
        if stored == key:
            est, _, _ = read_truth_cache(path)
            return est, False
    reps, seed = cfg["problem"]["truth_reps"], cfg["problem"]["truth_seed"]
    _estimate_truth_time(sim, reps, log)
    est = estimate_truth(sim, reps, seed)
    write_truth_cache(path, sim, est)
    write_metadata(path, truth_key=key, config_hash=config_hash(cfg), seed=seed, reps=reps)
    return est, True


def _estimate_truth_time(sim, reps, log) -> None:
    import numpy as np

    pilot = min(reps, 200)
    t = time.perf_counter()
    sim.draw(0, 0, np.random.default_rng(0), pilot)
    est = (time.perf_counter() - t) / pilot * reps * sim.k * sim.m
    log(f"building truth: {sim.k * sim.m} scenarios x {reps} reps, estimated {est:.0f} s", file=sys.stderr)


def _needs_truth(sim) -> bool:
    return getattr(sim, "truth", None) is None


# --- commands ----------------------------------------------------------------

def _out_dir(cfg) -> Path:
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _budget(cfg, sim) -> int:
    exp, proc = cfg["experiment"], cfg["procedure"]
    if "N" in exp:
        return exp["N"]
    return (proc["n0"] + exp["c"][0]) * sim.k * sim.m


def _meta(cfg, path, **extra):
    return write_metadata(path, config_hash=config_hash(cfg), seed=cfg["experiment"]["base_seed"], **extra)


def cmd_run(cfg) -> int:
    sim = build_problem(cfg["problem"])
    proc, seed = cfg["procedure"], cfg["experiment"]["base_seed"]
    N = _budget(cfg, sim)
    out = _out_dir(cfg)
    start = time.perf_counter()
    if proc["name"] == "EA":
        sel = run_procedure("EA", sim, proc["n0"], proc["delta"], N, seed)
        wall = time.perf_counter() - start
        path = out / "run.json"
        path.write_text(json.dumps({"procedure": "EA", "selection": sel + 1, "N": N,
                                    "N_used": (N // (sim.k * sim.m)) * sim.k * sim.m}) + "\n")
        used = (N // (sim.k * sim.m)) * sim.k * sim.m
    else:
        trace = run_meta_ocba(sim, ProcedureConfig(proc["n0"], proc["delta"], N, proc["rule"]), seed)
        wall = time.perf_counter() - start
        path = out / "trace.jsonl"
        trace.write_jsonl(path)
        sel, used = trace.selection, trace.n_used
    _meta(cfg, path, N=N)
    print(f"selection={sel + 1} N_used={used} N={N} wall_time={wall:.3f}s trace={path}")
    return 0


def _pilot_seconds(sim, procedure, n0, delta, N, seed) -> float:
    t = time.perf_counter()
    run_procedure(procedure, sim, n0, delta, N, seed)
    return time.perf_counter() - t


def _announce(cells, reps, jobs) -> None:
    est = sum(cells) * reps / max(1, jobs)
    print(f"estimated wall time ~{est:.0f} s for {len(cells)} cell(s) x {reps} replications "
          f"on {jobs} worker(s)", file=sys.stderr)


def _progress(writer):
    def on_row(row):
        if writer is not None:
            writer(row)
        print(f"  {row.config} {row.procedure} c={row.c} N={row.N}: pcs={row.pcs:.4f} "
              f"(se {row.stderr:.4f}) {row.wall_time_s:.1f}s", file=sys.stderr)
    return on_row


def _finish_report(cfg, report: ExperimentReport, path_csv: Path, writer) -> Path:
    if cfg["output"]["format"] == "json":
        path = path_csv.with_suffix(".json")
        path.write_text(json.dumps(report.to_json(), indent=2) + "\n")
    else:
        path = path_csv
        writer.close()
    _meta(cfg, path, failures=report.failures)
    return path


def _sweep(cfg, name: str, run) -> int:
    out = _out_dir(cfg)
    path_csv = out / f"{name}.csv"
    writer = CsvReportWriter(path_csv) if cfg["output"]["format"] == "csv" else None
    try:
        report = run(_progress(writer))
    except KeyboardInterrupt:
        if writer is not None:
            writer.close()
        print(f"interrupted; completed rows are in {path_csv if writer else out}", file=sys.stderr)
        return 1
    path = _finish_report(cfg, report, path_csv, writer)
    print(f"wrote {len(report.rows)} row(s) to {path}")
    for f in report.failures:
        print(f"cell failed: {f}", file=sys.stderr)
    return 1 if report.failures else 0


def cmd_pcs(cfg) -> int:
    sim = build_problem(cfg["problem"])
    exp, proc = cfg["experiment"], cfg["procedure"]
    truth = ensure_truth(cfg, sim)[0] if _needs_truth(sim) else None
    spec = SweepSpec(problem_label(cfg["problem"]), sim, tuple(exp["procedures"]), tuple(exp["c"]),
                     exp["replications"], exp["base_seed"], proc["n0"], proc["delta"], truth)
    top = spec.budget(max(spec.c_values))
    pilot_seed = exp["base_seed"] + exp["replications"]
    cells = [_pilot_seconds(sim, p, spec.n0, spec.delta, top, pilot_seed) * c / max(spec.c_values)
             for p in spec.procedures for c in spec.c_values]
    _announce(cells, exp["replications"], cfg["jobs"])
    return _sweep(cfg, "pcs", lambda on_row: budget_sweep(spec, cfg["jobs"], on_row))


def cmd_sweep_sensitivity(cfg) -> int:
    exp, proc = cfg["experiment"], cfg["procedure"]
    if "vary" not in exp or "values" not in exp:
        raise ConfigError("experiment.vary and experiment.values are required for sweep-sensitivity")
    sim = build_problem(cfg["problem"])
    truth = ensure_truth(cfg, sim)[0] if _needs_truth(sim) else None
    per = exp["per_scenario"]
    if exp["vary"] == "n0" and max(exp["values"]) > per:
        raise ConfigError(f"experiment.values must be ≤ per_scenario={per} when varying n0")
    N = per * sim.k * sim.m
    pilot_seed = exp["base_seed"] + exp["replications"]
    cells = []
    for v in exp["values"]:
        n0, delta = (v, proc["delta"]) if exp["vary"] == "n0" else (proc["n0"], v)
        cells.append(_pilot_seconds(sim, proc["name"], n0, delta, N, pilot_seed))
    _announce(cells, exp["replications"], cfg["jobs"])
    label = problem_label(cfg["problem"])
    return _sweep(cfg, "sensitivity", lambda on_row: sensitivity_sweep(
        sim, exp["vary"], exp["values"], exp["replications"], exp["base_seed"], n0=proc["n0"],
        delta=proc["delta"], per_scenario=per, procedure=proc["name"], label=label, truth=truth,
        jobs=cfg["jobs"], on_row=on_row))


def cmd_trace(cfg) -> int:
    sim = build_problem(cfg["problem"])
    proc = cfg["procedure"]
    if proc["name"] == "EA":
        raise ConfigError("procedure.name must be a sequential procedure for trace")
    N = _budget(cfg, sim)
    profile = allocation_profile(sim, ProcedureConfig(proc["n0"], proc["delta"], N, proc["rule"]),
                                 cfg["experiment"]["base_seed"])
    out = _out_dir(cfg)
    if cfg["output"]["format"] == "json":
        path = out / "profile.json"
        path.write_text(json.dumps({"t": profile.t.tolist(), "N_used": profile.n_used.tolist(),
                                    "counts": profile.counts.tolist(),
                                    "selection": profile.selection + 1}) + "\n")
    else:
        path = out / "profile.csv"
        profile.write_csv(path)
    _meta(cfg, path, N=N)
    print(f"selection={profile.selection + 1} rounds={len(profile.t) - 1} N_used={int(profile.n_used[-1])} "
          f"profile={path}")
    return 0


def cmd_validate(quick: bool) -> int:
    from .validation import run_checks

    checks = run_checks(quick=quick)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks if c.gate)
    print("all checks passed" if ok else "some checks FAILED")
    return 0 if ok else 1


def cmd_truth(cfg) -> int:
    if cfg["problem"]["kind"] != "inventory":
        raise ConfigError("problem.kind must be 'inventory' for truth")
    sim = build_problem(cfg["problem"])
    est, recomputed = ensure_truth(cfg, sim)
    path = _truth_path(cfg)
    s, S = sim.policies[est.best]
    state = "rebuilt" if recomputed else "up to date; no recomputation"
    flag = " AMBIGUOUS" if est.ambiguous else ""
    print(f"truth cache {path} {state}; best alternative {est.best + 1} (s={s:g}, S={S:g}) "
          f"worst-case mean {est.truth.worst_means[est.best]:.4f}{flag}")
    if est.ambiguous:
        print("best is within one standard error of another alternative; raise truth_reps", file=sys.stderr)
        return 1
    return 0


def default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config document")
    common.add_argument("--seed", type=int, help="overrides experiment.base_seed")
    common.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    common.add_argument("--out", metavar="DIR", help="overrides output.dir")
    common.add_argument("--format", choices=("csv", "json"), help="overrides output.format")

    p = argparse.ArgumentParser(prog="arocba", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one sequential run; writes a trace")
    sub.add_parser("pcs", parents=[common], help="PCS across budget levels c")
    sub.add_parser("sweep-sensitivity", parents=[common], help="PCS as n0 or delta varies")
    sub.add_parser("trace", parents=[common], help="per-round cumulative allocation profile")
    v = sub.add_parser("validate", parents=[common], help="self-check suite against oracles")
    v.add_argument("--quick", action="store_true", help="reduced-replication variant")
    sub.add_parser("truth", parents=[common], help="build or reuse the inventory truth cache")
    return p


COMMANDS = {"run": cmd_run, "pcs": cmd_pcs, "sweep-sensitivity": cmd_sweep_sensitivity,
            "trace": cmd_trace, "truth": cmd_truth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args.quick)
        if not args.config:
            raise ConfigError(f"--config is required for {args.command}")
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be ≥ 1")
        cfg = load_config(args.config)
        if args.jobs is None and "jobs" not in json.loads(Path(args.config).read_text()):
            args.jobs = default_jobs()
        cfg = apply_overrides(cfg, args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
