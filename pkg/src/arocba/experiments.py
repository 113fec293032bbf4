"""Macro-replication PCS estimation, budget and parameter sweeps, and
budget-concentration profiles.

Replication r of a cell always uses seed ``base_seed + r``, and results are
aggregated by counting, so PCS estimates do not depend on how replications
are spread over worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bounds import GroundTruth
from .problems import TruthEstimate
from .procedures import PROCEDURES, ProcedureConfig, Rule, run_meta_ocba, run_procedure

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("config", "procedure", "k", "m", "c", "N", "replications", "pcs", "stderr", "wall_time_s")


class AmbiguousTruthError(ValueError):
    pass


def oracle_best(problem, truth=None) -> int:
    """Index of the true best alternative, refusing ambiguous oracles."""
    truth = getattr(problem, "truth", None) if truth is None else truth
    if truth is None:
        raise ValueError("no ground truth available; pass truth= (see estimate_truth)")
    if isinstance(truth, TruthEstimate):
        if truth.ambiguous:
            raise AmbiguousTruthError(
                "oracle best is within one standard error of another alternative; "
                "increase the oracle replications or change the instance")
        return truth.best
    if isinstance(truth, GroundTruth):
        if not truth.unique_best:
            raise AmbiguousTruthError("ground truth has tied best alternatives")
        return truth.best
    raise TypeError(f"unsupported truth object {type(truth).__name__}")


def _count_correct(args) -> int:
    sim, procedure, n0, delta, N, best, seeds = args
    return sum(run_procedure(procedure, sim, n0, delta, N, int(s)) == best for s in seeds)


def _chunks(seq: Sequence[int], parts: int) -> list[Sequence[int]]:
    size = max(1, math.ceil(len(seq) / parts))
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def estimate_pcs(problem, procedure: str, config: ProcedureConfig, replications: int,
                 base_seed: int, truth=None, jobs: int = 1) -> tuple[float, float]:
    """Fraction of ``replications`` seeded runs that select the true best.

    ``config.rule`` is ignored; the rule follows from ``procedure``.
    Returns (pcs, binomial standard error).
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if procedure not in PROCEDURES:
        raise ValueError(f"unknown procedure {procedure!r}; expected one of {PROCEDURES}")
    best = oracle_best(problem, truth)
    seeds = range(base_seed, base_seed + replications)
    common = (problem, procedure, config.n0, config.delta, config.total_budget, best)
    if jobs <= 1:
        correct = _count_correct((*common, seeds))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            correct = sum(pool.map(_count_correct, [(*common, ch) for ch in _chunks(seeds, jobs * 4)]))
    pcs = correct / replications
    return pcs, math.sqrt(pcs * (1 - pcs) / replications)


@dataclass(frozen=True)
class ReportRow:
    config: str
    procedure: str
    k: int
    m: int
    c: int
    N: int
    replications: int
    pcs: float
    stderr: float
    wall_time_s: float
    n0: int = 0
    delta: int = 0

    def csv_fields(self) -> list:
        return [self.config, self.procedure, self.k, self.m, self.c, self.N, self.replications,
                repr(self.pcs), repr(self.stderr), f"{self.wall_time_s:.3f}"]


@dataclass
class ExperimentReport:
    rows: list[ReportRow] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def get(self, procedure: str, c: int | None = None, **match) -> ReportRow:
        for r in self.rows:
            if r.procedure == procedure and (c is None or r.c == c) and \
                    all(getattr(r, key) == val for key, val in match.items()):
                return r
        raise KeyError((procedure, c, match))

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for r in self.rows:
                w.writerow(r.csv_fields())

    def to_json(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "failures": self.failures,
                "metadata": self.metadata}


class CsvReportWriter:
    """Appends report rows as they finish so an interrupted sweep keeps its rows."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(REPORT_COLUMNS)
        self._fh.flush()

    def __call__(self, row: ReportRow) -> None:
        self._w.writerow(row.csv_fields())
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


@dataclass(frozen=True)
class SweepSpec:
    label: str
    problem: object
    procedures: tuple[str, ...]
    c_values: tuple[int, ...]
    replications: int
    base_seed: int
    n0: int = 20
    delta: int = 20
    truth: object = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.c_values or any(c <= 0 for c in self.c_values):
            raise ValueError("c_values must be a nonempty list of positive integers")
        if not self.procedures:
            raise ValueError("at least one procedure is required")

    def budget(self, c: int) -> int:
        return (self.n0 + c) * self.problem.k * self.problem.m


def _run_cell(label, problem, truth, procedure, n0, delta, c, N, replications, base_seed,
              jobs, report, on_row):
    cfg = ProcedureConfig(n0, delta, N, Rule.PROPORTIONAL)
    start = time.perf_counter()
    try:
        pcs, se = estimate_pcs(problem, procedure, cfg, replications, base_seed, truth=truth, jobs=jobs)
    except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
        log.warning("cell %s/%s c=%s failed: %s", label, procedure, c, exc)
        report.failures.append({"config": label, "procedure": procedure, "c": c, "N": N,
                                "error": f"{type(exc).__name__}: {exc}"})
        return
    row = ReportRow(label, procedure, problem.k, problem.m, c, N, replications, pcs, se,
                    time.perf_counter() - start, n0, delta)
    report.rows.append(row)
    if on_row is not None:
        on_row(row)


def budget_sweep(spec: SweepSpec, jobs: int = 1,
                 on_row: Callable[[ReportRow], None] | None = None) -> ExperimentReport:
    """PCS for every (procedure, c) pair with N = (n0 + c) k m; rows sorted by (procedure, c)."""
    report = ExperimentReport(metadata={"kind": "budget_sweep", "base_seed": spec.base_seed,
                                        "n0": spec.n0, "delta": spec.delta})
    for procedure in spec.procedures:
        for c in sorted(spec.c_values):
            _run_cell(spec.label, spec.problem, spec.truth, procedure, spec.n0, spec.delta, c,
                      spec.budget(c), spec.replications, spec.base_seed, jobs, report, on_row)
    return report


def sensitivity_sweep(problem, vary: str, values: Sequence[int], replications: int, base_seed: int,
                      n0: int = 10, delta: int = 10, per_scenario: int = 50, procedure: str = "AR-OCBA",
                      label: str | None = None, truth=None, jobs: int = 1,
                      on_row: Callable[[ReportRow], None] | None = None) -> ExperimentReport:
    """PCS of one procedure as n0 or delta varies with N = per_scenario * k * m pinned.

    The varied value is appended to the row's config label (``"MM-CV delta=4"``).
    """
    if vary not in ("n0", "delta"):
        raise ValueError(f"vary must be 'n0' or 'delta', got {vary!r}")
    if not values:
        raise ValueError("values must be nonempty")
    label = label or getattr(problem, "label", "problem")
    k, m = problem.k, problem.m
    N = per_scenario * k * m
    report = ExperimentReport(metadata={"kind": "sensitivity_sweep", "vary": vary,
                                        "base_seed": base_seed, "N": N})
    for v in values:
        cur_n0, cur_delta = (v, delta) if vary == "n0" else (n0, v)
        if cur_n0 < 2 or cur_delta < 1 or cur_n0 > per_scenario:
            raise ValueError(f"{vary}={v} is outside the valid range")
        _run_cell(f"{label} {vary}={v}", problem, truth, procedure, cur_n0, cur_delta,
                  per_scenario - cur_n0, N, replications, base_seed, jobs, report, on_row)
    return report


@dataclass
class AllocationProfile:
    """Cumulative per-scenario counts after initialisation (row 0) and each round."""

    t: np.ndarray
    n_used: np.ndarray
    counts: np.ndarray
    selection: int

    @property
    def final_counts(self) -> np.ndarray:
        return self.counts[-1]

    def write_csv(self, path) -> None:
        _, k, m = self.counts.shape
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "N_used"] + [f"n_{i + 1}_{j + 1}" for i in range(k) for j in range(m)])
            for t, used, c in zip(self.t, self.n_used, self.counts):
                w.writerow([int(t), int(used)] + [int(x) for x in c.ravel()])


def allocation_profile(problem, config: ProcedureConfig, seed: int) -> AllocationProfile:
    trace = run_meta_ocba(problem, config, seed, record=True)
    k, m = trace.k, trace.m
    counts = np.empty((trace.n_rounds + 1, k, m), dtype=np.int64)
    counts[0] = config.n0
    used = [k * m * config.n0]
    for r, rec in enumerate(trace.rounds, start=1):
        counts[r] = counts[r - 1]
        np.add.at(counts[r], (rec.index_set.rows, rec.index_set.cols), rec.grants)
        used.append(rec.n_used)
    return AllocationProfile(np.arange(trace.n_rounds + 1), np.array(used), counts, trace.selection)


def write_metadata(path, **fields) -> Path:
    """Sidecar ``<path>.meta.json`` carrying provenance for an output file."""
    from . import __version__

    meta_path = Path(str(path) + ".meta.json")
    meta_path.write_text(json.dumps({"version": __version__, **fields}, indent=2, sort_keys=True) + "\n")
    return meta_path
