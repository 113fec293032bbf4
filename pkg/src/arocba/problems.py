"""Problem generators and the simulator interface consumed by the procedures.

A simulator exposes ``k``, ``m`` and ``draw(i, j, rng, size)``. Simulators
may also provide ``draw_batch(rows, cols, counts, rng)`` returning the draws
of several scenarios laid out one after another; ``draw_batch`` below falls
back to calling ``draw`` per scenario.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from numba import njit

from .bounds import GroundTruth


class Simulator(Protocol):
    k: int
    m: int

    def draw(self, i: int, j: int, rng: np.random.Generator, size: int | None = None): ...


def draw_batch(sim, rows: np.ndarray, cols: np.ndarray, counts: np.ndarray,
               rng: np.random.Generator) -> np.ndarray:
    fast = getattr(sim, "draw_batch", None)
    if fast is not None:
        return fast(rows, cols, counts, rng)
    parts = [np.asarray(sim.draw(int(i), int(j), rng, int(c)), dtype=float)
             for i, j, c in zip(rows, cols, counts) if c > 0]
    return np.concatenate(parts) if parts else np.empty(0)


# --- synthetic Gaussian configurations ------------------------------------

VARIANCE_KINDS = ("CV", "IV", "DV")


def mm_means(k: int, m: int) -> np.ndarray:
    """Monotone means 0.5 i - 0.2 j - 1 with 1-based i, j."""
    i = np.arange(1, k + 1)[:, None]
    j = np.arange(1, m + 1)[None, :]
    return 0.5 * i - 0.2 * j - 1.0


def mm_variances(k: int, m: int, kind: str) -> np.ndarray:
    i = np.arange(1, k + 1)[:, None].astype(float)
    j = np.arange(1, m + 1)[None, :].astype(float)
    if kind == "CV":
        return np.full((k, m), 16.0 ** 2)
    if kind == "IV":
        return (12.0 + np.sqrt(0.2 * i + j)) ** 2
    if kind == "DV":
        return (12.0 + 1.0 / (0.2 * i + j)) ** 2
    raise ValueError(f"unknown variance configuration {kind!r}; expected one of {VARIANCE_KINDS}")


@dataclass(frozen=True)
class SyntheticProblem:
    """Independent normal observations with known means and variances."""

    truth: GroundTruth
    label: str = "Custom"
    sd: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "sd", np.sqrt(self.truth.sigma2))

    @property
    def k(self) -> int:
        return self.truth.k

    @property
    def m(self) -> int:
        return self.truth.m

    def draw(self, i, j, rng, size=None):
        return self.truth.mu[i, j] + self.sd[i, j] * rng.standard_normal(size)

    def draw_batch(self, rows, cols, counts, rng):
        z = rng.standard_normal(int(counts.sum()))
        return np.repeat(self.truth.mu[rows, cols], counts) + np.repeat(self.sd[rows, cols], counts) * z


def make_synthetic(k: int, m: int, variance_kind: str = "CV") -> SyntheticProblem:
    if k < 2 or m < 1:
        raise ValueError(f"synthetic configurations need k >= 2 and m >= 1, got k={k}, m={m}")
    kind = variance_kind.upper()
    truth = GroundTruth(mm_means(k, m), mm_variances(k, m, kind))
    return SyntheticProblem(truth, f"MM-{kind}")


def make_custom(mu, sigma2, label: str = "Custom") -> SyntheticProblem:
    return SyntheticProblem(GroundTruth(mu, sigma2), label)


def small_instance() -> SyntheticProblem:
    """The 3 x 3 instance used to illustrate budget concentration."""
    mu = [[0.2, 0.1, 0.1],
          [0.4, 0.3, 0.3],
          [0.4, 0.4, 0.4]]
    return SyntheticProblem(GroundTruth(mu, np.ones((3, 3))), "Small-3x3")


def gaussian_draw(problem: SyntheticProblem, i: int, j: int, rng, size=None):
    return problem.draw(i, j, rng, size)


# --- (s, S) inventory -------------------------------------------------------

@dataclass(frozen=True)
class InventoryParams:
    """Periodic-review (s, S) system with exponential daily demand.

    Unmet demand is backordered with no explicit penalty; backorders simply
    consume the next delivery. ``initial_inventory`` defaults to S.
    """

    s: float
    S: float
    demand_mean: float
    horizon: int = 500
    holding_cost: float = 1.0
    fixed_order_cost: float = 36.0
    unit_cost: float = 2.0
    lead_time_mean: float = 6.0
    initial_inventory: float | None = None

    def __post_init__(self):
        if not self.s < self.S:
            raise ValueError(f"need s < S, got s={self.s}, S={self.S}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if min(self.holding_cost, self.fixed_order_cost, self.unit_cost) < 0:
            raise ValueError("costs must be nonnegative")
        if self.demand_mean < 0 or self.lead_time_mean < 0:
            raise ValueError("demand and lead-time means must be nonnegative")


@njit(cache=True)
def _ss_costs(demand, lead, s, S, x0, h, K, c):
    n, H = demand.shape
    out = np.empty(n)
    maxlead = 0
    for r in range(n):
        for t in range(H):
            if lead[r, t] > maxlead:
                maxlead = lead[r, t]
    pipeline = np.zeros(H + maxlead + 2)
    for r in range(n):
        pipeline[:] = 0.0
        on_hand = x0
        on_order = 0.0
        cost = 0.0
        for t in range(H):
            arriving = pipeline[t]
            if arriving > 0.0:
                on_hand += arriving
                on_order -= arriving
            on_hand -= demand[r, t]
            if on_hand > 0.0:
                cost += h * on_hand
            position = on_hand + on_order
            if position < s:
                q = S - position
                cost += K + c * q
                on_order += q
                pipeline[t + 1 + lead[r, t]] += q
        out[r] = cost / H
    return out


def inventory_draw(params: InventoryParams, rng: np.random.Generator, size: int | None = None,
                   chunk: int = 2000):
    """Average daily cost over the horizon, one value per replication.

    Each day: deliveries due arrive, demand ~ Exponential(demand_mean) is
    served or backordered, holding cost accrues on positive on-hand stock,
    and if the inventory position is below s an order up to S is placed
    (fixed plus per-unit cost). An order placed on day t arrives at the start
    of day t + 1 + L with L ~ Poisson(lead_time_mean).
    """
    n = 1 if size is None else int(size)
    H = params.horizon
    x0 = float(params.S if params.initial_inventory is None else params.initial_inventory)
    out = np.empty(n)
    for lo in range(0, n, chunk):
        b = min(chunk, n - lo)
        if params.demand_mean > 0:
            demand = rng.exponential(params.demand_mean, (b, H))
        else:
            demand = np.zeros((b, H))
        lead = rng.poisson(params.lead_time_mean, (b, H)).astype(np.int64)
        out[lo:lo + b] = _ss_costs(demand, lead, float(params.s), float(params.S), x0,
                                   float(params.holding_cost), float(params.fixed_order_cost),
                                   float(params.unit_cost))
    return out[0] if size is None else out


DEFAULT_S_GRID = tuple(range(700, 1001, 25))
DEFAULT_BIG_S_GRID = tuple(range(1500, 2001, 50))
DEFAULT_DEMAND_MEANS = tuple(range(40, 81, 5))


@dataclass(frozen=True)
class InventorySimulator:
    """Alternatives are (s, S) policies, distributions are demand means.

    Alternatives enumerate s (outer) then S (inner), both ascending;
    distributions enumerate demand means ascending.
    """

    policies: tuple[tuple[float, float], ...]
    demand_means: tuple[float, ...]
    base: InventoryParams

    @property
    def k(self) -> int:
        return len(self.policies)

    @property
    def m(self) -> int:
        return len(self.demand_means)

    def params(self, i: int, j: int) -> InventoryParams:
        s, S = self.policies[i]
        return replace(self.base, s=s, S=S, demand_mean=self.demand_means[j])

    def draw(self, i, j, rng, size=None):
        return inventory_draw(self.params(i, j), rng, size)


def build_inventory_problem(s_grid: Sequence[float] = DEFAULT_S_GRID,
                            S_grid: Sequence[float] = DEFAULT_BIG_S_GRID,
                            demand_means: Sequence[float] = DEFAULT_DEMAND_MEANS,
                            **overrides) -> InventorySimulator:
    if not s_grid or not S_grid or not demand_means:
        raise ValueError("policy grids and demand means must be nonempty")
    policies = []
    dropped = []
    for s in sorted(s_grid):
        for S in sorted(S_grid):
            (policies if s < S else dropped).append((s, S))
    if dropped:
        warnings.warn(f"dropped {len(dropped)} policies with s >= S: {dropped}", stacklevel=2)
    if not policies:
        raise ValueError("no policy with s < S in the grid")
    s0, S0 = policies[0]
    base = InventoryParams(s0, S0, float(sorted(demand_means)[0]), **overrides)
    return InventorySimulator(tuple(policies), tuple(float(d) for d in sorted(demand_means)), base)


# --- oracle truth -----------------------------------------------------------

@dataclass(frozen=True)
class TruthEstimate:
    """Monte Carlo ground truth with per-scenario standard errors."""

    truth: GroundTruth
    reps: int
    stderr: np.ndarray
    ambiguous: bool

    @property
    def best(self) -> int:
        return self.truth.best


def _is_ambiguous(truth: GroundTruth, stderr: np.ndarray) -> bool:
    if truth.k < 2:
        return False
    wc = truth.worst_means
    wse = stderr[np.arange(truth.k), truth.worst_of]
    b = truth.best
    others = [i for i in range(truth.k) if i != b]
    diff = wc[others] - wc[b]
    se = np.sqrt(wse[others] ** 2 + wse[b] ** 2)
    return bool(np.any(diff <= se))


def estimate_truth(sim, reps_per_scenario: int, seed: int) -> TruthEstimate:
    """Sample mean and variance of every scenario from independent replications.

    Scenarios are simulated in row-major order from one generator seeded
    with ``seed``. The result is flagged ambiguous when some alternative's
    worst-case mean is within one combined standard error of the best's.
    """
    if reps_per_scenario < 2:
        raise ValueError("reps_per_scenario must be >= 2")
    rng = np.random.default_rng(seed)
    mu = np.empty((sim.k, sim.m))
    var = np.empty((sim.k, sim.m))
    for i in range(sim.k):
        for j in range(sim.m):
            x = np.asarray(sim.draw(i, j, rng, reps_per_scenario), dtype=float)
            mu[i, j] = x.mean()
            var[i, j] = x.var(ddof=1)
    stderr = np.sqrt(var / reps_per_scenario)
    truth = GroundTruth(mu, var)
    return TruthEstimate(truth, reps_per_scenario, stderr, _is_ambiguous(truth, stderr))


TRUTH_COLUMNS = ("scenario_i", "scenario_j", "s", "S", "demand_mean", "reps", "mean", "variance", "stderr")


def write_truth_cache(path, sim: InventorySimulator, est: TruthEstimate) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRUTH_COLUMNS)
        for i, (s, S) in enumerate(sim.policies):
            for j, d in enumerate(sim.demand_means):
                w.writerow([i + 1, j + 1, repr(float(s)), repr(float(S)), repr(float(d)), est.reps,
                            repr(float(est.truth.mu[i, j])), repr(float(est.truth.sigma2[i, j])),
                            repr(float(est.stderr[i, j]))])


def read_truth_cache(path) -> tuple[TruthEstimate, list[tuple[float, float]], list[float]]:
    """Load a cache written by ``write_truth_cache``.

    Returns the estimate, the policy list and the demand means, so callers
    can check that the cache matches their simulator.
    """
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"empty truth cache {path}")
    k = max(int(r["scenario_i"]) for r in rows)
    m = max(int(r["scenario_j"]) for r in rows)
    mu = np.full((k, m), math.nan)
    var = np.full((k, m), math.nan)
    se = np.full((k, m), math.nan)
    policies: list = [None] * k
    demands: list = [None] * m
    reps = set()
    for r in rows:
        i, j = int(r["scenario_i"]) - 1, int(r["scenario_j"]) - 1
        mu[i, j] = float(r["mean"])
        var[i, j] = float(r["variance"])
        se[i, j] = float(r["stderr"])
        policies[i] = (float(r["s"]), float(r["S"]))
        demands[j] = float(r["demand_mean"])
        reps.add(int(r["reps"]))
    if np.isnan(mu).any():
        raise ValueError(f"truth cache {path} does not cover all {k}x{m} scenarios")
    if len(reps) != 1:
        raise ValueError(f"truth cache {path} mixes replication counts {sorted(reps)}")
    truth = GroundTruth(mu, var)
    return TruthEstimate(truth, reps.pop(), se, _is_ambiguous(truth, se)), policies, demands
