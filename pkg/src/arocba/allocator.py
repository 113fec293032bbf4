"""Closed-form asymptotic budget allocation over the k + m - 1 relevant scenarios.

Given the reference scenario (the best alternative's worst case) in slot 0,
every other slot r competes with it through a mean gap delta_r. The
allocation gives slot r >= 1 a weight (sigma_r / delta_r)^2 and the reference
slot sigma_0 * sqrt(sum_r weight_r^2 / sigma_r^2); the budget is split in
proportion to these weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .bounds import Allocation, GroundTruth
from .core import ScenarioGrid, ScenarioId

GAP_FLOOR = 1e-8
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class IndexSet:
    """Relevant scenarios in slot order: reference, other alternatives' worst
    cases (ascending alternative), best alternative's other columns
    (ascending column)."""

    rows: np.ndarray
    cols: np.ndarray

    @property
    def best(self) -> int:
        return int(self.rows[0])

    @property
    def entries(self) -> list[ScenarioId]:
        return [ScenarioId(int(i), int(j)) for i, j in zip(self.rows, self.cols)]

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class AllocationTarget:
    index_set: IndexSet | None
    n_target: np.ndarray
    budget: float
    degenerate: bool = False  # every gap hit the floor; equal split returned


@njit(cache=True)
def index_rows_cols(means):
    """Row and column arrays of the index set built from a table of means."""
    k, m = means.shape
    worst = np.empty(k, dtype=np.int64)
    b = 0
    best_wc = np.inf
    for i in range(k):
        w = 0
        for j in range(1, m):
            if means[i, j] > means[i, w]:
                w = j
        worst[i] = w
        if means[i, w] < best_wc:
            best_wc = means[i, w]
            b = i
    wb = worst[b]
    rows = np.empty(k + m - 1, dtype=np.int64)
    cols = np.empty(k + m - 1, dtype=np.int64)
    rows[0] = b
    cols[0] = wb
    p = 1
    for i in range(k):
        if i != b:
            rows[p] = i
            cols[p] = worst[i]
            p += 1
    for j in range(m):
        if j != wb:
            rows[p] = b
            cols[p] = j
            p += 1
    return rows, cols


def index_set_from_means(means: np.ndarray) -> IndexSet:
    rows, cols = index_rows_cols(np.ascontiguousarray(means, dtype=np.float64))
    return IndexSet(rows, cols)


def build_index_set(grid: ScenarioGrid) -> IndexSet:
    if np.any(grid.count < 1):
        raise ValueError("every scenario needs at least one observation before its mean is defined")
    return index_set_from_means(grid.mean)


@njit(cache=True)
def _weights(means, variances):
    K = means.size
    floor = GAP_FLOOR * max(1.0, abs(means[0]))
    beta = np.empty(K)
    degenerate = True
    for r in range(1, K):
        if abs(means[0] - means[r]) >= floor:
            degenerate = False
    if degenerate:
        beta[:] = 1.0
        return beta, True
    acc = 0.0
    for r in range(1, K):
        gap = max(abs(means[0] - means[r]), floor)
        v = max(variances[r], VARIANCE_FLOOR)
        beta[r] = v / (gap * gap)
        acc += beta[r] * beta[r] / v
    beta[0] = np.sqrt(max(variances[0], VARIANCE_FLOOR) * acc)
    return beta, False


def allocation_weights(means, variances) -> tuple[np.ndarray, bool]:
    """Unnormalised weights for slots in index-set order (reference first).

    Gaps are floored at 1e-8 * max(1, |mean of reference|) and variances at
    1e-12. Returns (weights, degenerate) where degenerate means every gap was
    floored, in which case equal weights are returned.
    """
    means = np.ascontiguousarray(means, dtype=np.float64)
    variances = np.ascontiguousarray(variances, dtype=np.float64)
    if means.ndim != 1 or means.size < 2:
        raise ValueError("an allocation needs at least two slots")
    if variances.shape != means.shape:
        raise ValueError("means and variances must have the same length")
    return _weights(means, variances)


def solve_asymptotic_allocation(means, variances, budget: float,
                                index_set: IndexSet | None = None) -> AllocationTarget:
    """Split ``budget`` over the index set by the asymptotic optimality conditions.

    ``means`` and ``variances`` are the per-slot estimates, reference first.
    """
    if not budget > 0:
        raise ValueError(f"budget must be positive, got {budget}")
    beta, degenerate = allocation_weights(means, variances)
    n = budget * beta / beta.sum()
    return AllocationTarget(index_set, n, float(budget), degenerate)


def theorem_allocation(truth: GroundTruth, N: float) -> Allocation:
    """Asymptotically optimal allocation of N over all k*m scenarios.

    Scenarios outside the relevant set get exactly zero.
    """
    if not N > 0:
        raise ValueError(f"N must be positive, got {N}")
    if not truth.unique_best:
        raise ValueError("theorem_allocation needs a unique best alternative")
    ids = truth.relevant()
    means = np.array([truth.mu[s] for s in ids])
    var = np.array([truth.sigma2[s] for s in ids])
    target = solve_asymptotic_allocation(means, var, N)
    n = np.zeros((truth.k, truth.m))
    for s, x in zip(ids, target.n_target):
        n[s] = x
    return Allocation(n)
