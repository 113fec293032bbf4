"""Sequential OCBA engine for robust selection, stage-wise rules, and the
equal-allocation baseline.

Random numbers are consumed in a fixed order: the initial n0 draws scenario
by scenario in row-major order, then each round's grants slot by slot in
index-set order. One generator is seeded per run, so a run is a pure
function of (simulator, config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from numba import njit

from .allocator import IndexSet, _weights, index_rows_cols
from .core import ScenarioGrid, select_best
from .problems import draw_batch


class Rule(str, Enum):
    PROPORTIONAL = "proportional"
    MOST_STARVING = "most_starving"


@dataclass(frozen=True)
class ProcedureConfig:
    n0: int = 20
    delta: int = 20
    total_budget: int = 0
    rule: Rule = Rule.PROPORTIONAL

    def __post_init__(self):
        if self.n0 < 2:
            raise ValueError(f"n0 must be >= 2, got {self.n0}")
        if self.delta < 1:
            raise ValueError(f"delta must be >= 1, got {self.delta}")
        object.__setattr__(self, "rule", Rule(self.rule))

    def check(self, k: int, m: int) -> None:
        if self.total_budget < k * m * self.n0:
            raise ValueError(f"total_budget {self.total_budget} is below k*m*n0 = {k * m * self.n0}")


@dataclass
class RoundRecord:
    t: int
    index_set: IndexSet
    targets: np.ndarray
    grants: np.ndarray
    n_used: int

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "N_used": self.n_used,
            "slots": [[int(i) + 1, int(j) + 1] for i, j in zip(self.index_set.rows, self.index_set.cols)],
            "targets": [float(x) for x in self.targets],
            "grants": [int(g) for g in self.grants],
        }


@dataclass
class RunTrace:
    k: int
    m: int
    config: ProcedureConfig
    rounds: list[RoundRecord] = field(default_factory=list)
    final_counts: np.ndarray | None = None
    selection: int = -1
    n_used: int = 0
    n_rounds: int = 0

    @property
    def unspent(self) -> int:
        return max(0, self.config.total_budget - self.n_used)

    def write_jsonl(self, path) -> None:
        """One JSON record per round, then a closing summary record."""
        path = Path(path)
        with path.open("w") as fh:
            for rec in self.rounds:
                fh.write(json.dumps(rec.to_json()) + "\n")
            fh.write(json.dumps({
                "summary": True,
                "selection": self.selection + 1,
                "N_used": self.n_used,
                "rounds": self.n_rounds,
                "unspent": self.unspent,
                "final_counts": self.final_counts.tolist(),
            }) + "\n")


class SimulationError(RuntimeError):
    def __init__(self, message: str, round_index: int):
        super().__init__(message)
        self.round_index = round_index


@njit(cache=True)
def _proportional(gaps, delta):
    total = 0
    for g in gaps:
        if g > 0:
            total += g
    out = np.zeros(gaps.size, dtype=np.int64)
    for r in range(gaps.size):
        if gaps[r] > 0:
            out[r] = -((-gaps[r] * delta) // total)
    return out


@njit(cache=True)
def _most_starving(gaps, delta):
    out = np.zeros(gaps.size, dtype=np.int64)
    best = 0
    for r in range(1, gaps.size):
        if gaps[r] > gaps[best]:
            best = r
    out[best if gaps[best] > 0 else 0] = delta
    return out


def proportional_split(gaps, delta: int) -> np.ndarray:
    """ceil(gap_r * delta / sum of positive gaps) per slot, in exact integers.

    The total can exceed ``delta`` by up to (number of needy slots - 1).
    """
    gaps = np.asarray(gaps, dtype=np.int64)
    if delta < 1:
        raise ValueError("delta must be >= 1")
    if not np.any(gaps > 0):
        raise ValueError("proportional_split needs at least one positive gap")
    return _proportional(gaps, int(delta))


def most_starving_split(gaps, delta: int) -> np.ndarray:
    """All of ``delta`` to the slot with the largest positive gap (first on ties),
    or to slot 0 when no slot is short."""
    gaps = np.asarray(gaps, dtype=np.int64)
    if delta < 1:
        raise ValueError("delta must be >= 1")
    return _most_starving(gaps, int(delta))


@njit(cache=True)
def _plan_round(mean, count, ssd, budget, delta, starving):
    """Index set, real-valued targets and integer grants for one round."""
    rows, cols = index_rows_cols(mean)
    K = rows.size
    cnt = np.empty(K, dtype=np.int64)
    mu = np.empty(K)
    var = np.empty(K)
    for r in range(K):
        cnt[r] = count[rows[r], cols[r]]
        mu[r] = mean[rows[r], cols[r]]
        var[r] = ssd[rows[r], cols[r]] / (cnt[r] - 1)
    if K == 1:
        targets = np.full(1, float(budget))
    else:
        beta, _ = _weights(mu, var)
        targets = budget * beta / beta.sum()
    gaps = np.empty(K, dtype=np.int64)
    need = 0
    for r in range(K):
        # round half up before differencing
        g = np.int64(np.floor(targets[r] + 0.5)) - cnt[r]
        gaps[r] = g if g > 0 else 0
        need += gaps[r]
    if need == 0:
        grants = np.zeros(K, dtype=np.int64)
        grants[0] = delta
    elif starving:
        grants = _most_starving(gaps, delta)
    else:
        grants = _proportional(gaps, delta)
    return rows, cols, targets, grants


def _draw(sim, rows, cols, counts, rng, t):
    try:
        return np.asarray(draw_batch(sim, rows, cols, counts, rng), dtype=float)
    except Exception as exc:
        where = "initialisation" if t == 0 else f"round {t}"
        raise SimulationError(f"simulator failed during {where}: {exc}", t) from exc


def run_meta_ocba(sim, config: ProcedureConfig, seed: int, record: bool = True) -> RunTrace:
    """Run the sequential procedure once and return its trace.

    Phase 1 takes n0 observations per scenario. Each round then rebuilds the
    index set from current means, computes targets for budget N_used + delta,
    turns them into integer gaps, splits delta by ``config.rule`` and books
    the realised number of draws. The loop stops once N_used + delta >= N;
    leftover budget stays unspent.
    """
    k, m = sim.k, sim.m
    config.check(k, m)
    rng = np.random.default_rng(seed)
    grid = ScenarioGrid(k, m)
    n0, delta, N = config.n0, config.delta, config.total_budget

    all_rows = np.repeat(np.arange(k, dtype=np.int64), m)
    all_cols = np.tile(np.arange(m, dtype=np.int64), k)
    init = np.full(k * m, n0, dtype=np.int64)
    grid.add_many(all_rows, all_cols, init, _draw(sim, all_rows, all_cols, init, rng, 0))

    trace = RunTrace(k, m, config)
    count, mean, ssd = grid.count, grid.mean, grid.sum_sq_dev
    n_used = grid.total_used
    starving = config.rule is Rule.MOST_STARVING
    t = 0
    while n_used + delta < N:
        t += 1
        rows, cols, targets, grants = _plan_round(mean, count, ssd, n_used + delta, delta, starving)
        grid.add_many(rows, cols, grants, _draw(sim, rows, cols, grants, rng, t))
        n_used = grid.total_used
        if record:
            trace.rounds.append(RoundRecord(t, IndexSet(rows, cols), targets, grants, n_used))

    trace.n_rounds = t
    trace.n_used = n_used
    trace.final_counts = count.copy()
    trace.selection = select_best(mean)
    return trace


def run_equal_allocation(sim, total_budget: int, seed: int) -> int:
    """floor(N / km) observations per scenario, then the minimax selection."""
    k, m = sim.k, sim.m
    per = total_budget // (k * m)
    if per < 1:
        raise ValueError(f"total_budget {total_budget} is below k*m = {k * m}")
    rng = np.random.default_rng(seed)
    rows = np.repeat(np.arange(k, dtype=np.int64), m)
    cols = np.tile(np.arange(m, dtype=np.int64), k)
    counts = np.full(k * m, per, dtype=np.int64)
    grid = ScenarioGrid(k, m)
    grid.add_many(rows, cols, counts, _draw(sim, rows, cols, counts, rng, 0))
    return select_best(grid.mean)


PROCEDURES = ("AR-OCBA", "AR-OCBA-Starving", "EA")


def run_procedure(name: str, sim, n0: int, delta: int, total_budget: int, seed: int) -> int:
    """Selection (0-based alternative) of one named procedure run."""
    if name == "EA":
        return run_equal_allocation(sim, total_budget, seed)
    if name == "AR-OCBA":
        rule = Rule.PROPORTIONAL
    elif name == "AR-OCBA-Starving":
        rule = Rule.MOST_STARVING
    else:
        raise ValueError(f"unknown procedure {name!r}; expected one of {PROCEDURES}")
    cfg = ProcedureConfig(n0, delta, total_budget, rule)
    return run_meta_ocba(sim, cfg, seed, record=False).selection
