"""Scenario bookkeeping and the minimax selection rule.

A *scenario* is an (alternative, distribution) pair. All indices in the
Python API are 0-based; files and CLI output use 1-based labels.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from numba import njit


class ScenarioId(NamedTuple):
    i: int
    j: int

    def label(self) -> tuple[int, int]:
        """1-based (alternative, distribution) pair for external output."""
        return (self.i + 1, self.j + 1)


class ScenarioStats:
    """Running count, mean and sum of squared deviations for one scenario.

    Single values go through Welford's recurrence; batches are folded in with
    the pairwise merge of Chan et al., so large offsets do not cancel.
    """

    __slots__ = ("count", "mean", "sum_sq_dev")

    def __init__(self, count: int = 0, mean: float = 0.0, sum_sq_dev: float = 0.0):
        self.count = count
        self.mean = mean
        self.sum_sq_dev = sum_sq_dev

    def update(self, x: float) -> "ScenarioStats":
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.sum_sq_dev += d * (x - self.mean)
        return self

    def extend(self, values) -> "ScenarioStats":
        values = np.asarray(values, dtype=float)
        nb = values.size
        if nb == 0:
            return self
        mb = float(values.mean())
        m2b = float(np.sum((values - mb) ** 2))
        na = self.count
        n = na + nb
        d = mb - self.mean
        self.mean += d * nb / n
        self.sum_sq_dev += m2b + d * d * na * nb / n
        self.count = n
        return self

    @property
    def variance(self) -> float:
        """Unbiased sample variance; NaN until two observations are in."""
        if self.count < 2:
            return math.nan
        return self.sum_sq_dev / (self.count - 1)

    def __repr__(self) -> str:
        return f"ScenarioStats(count={self.count}, mean={self.mean!r}, sum_sq_dev={self.sum_sq_dev!r})"


def update_stats(stats: ScenarioStats, x: float) -> ScenarioStats:
    return stats.update(x)


class ScenarioGrid:
    """k x m table of scenario statistics plus the budget ledger.

    Kept as three k x m arrays so the sequential procedures read all means
    at once. ``total_used`` always equals ``count.sum()``.
    """

    def __init__(self, k: int, m: int):
        if k < 1 or m < 1:
            raise ValueError(f"grid needs k >= 1 and m >= 1, got k={k}, m={m}")
        self.k = k
        self.m = m
        self.count = np.zeros((k, m), dtype=np.int64)
        self.mean = np.zeros((k, m))
        self.sum_sq_dev = np.zeros((k, m))
        self.total_used = 0

    def stats(self, i: int, j: int) -> ScenarioStats:
        """Snapshot of scenario (i, j)."""
        return ScenarioStats(int(self.count[i, j]), float(self.mean[i, j]), float(self.sum_sq_dev[i, j]))

    def add(self, i: int, j: int, values) -> None:
        s = self.stats(i, j).extend(values)
        self.count[i, j] = s.count
        self.mean[i, j] = s.mean
        self.sum_sq_dev[i, j] = s.sum_sq_dev
        self.total_used += int(np.size(values))

    def add_many(self, rows: np.ndarray, cols: np.ndarray, counts: np.ndarray, values: np.ndarray) -> None:
        """Merge ``values`` (laid out slot after slot) into the given scenarios.

        ``counts`` must sum to ``len(values)``.
        """
        used = _merge_batches(self.count, self.mean, self.sum_sq_dev,
                              np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
                              np.asarray(counts, dtype=np.int64), np.asarray(values, dtype=np.float64))
        if used != len(values):
            raise ValueError(f"counts sum to {used} but {len(values)} values were given")
        self.total_used += used

    def variance(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count >= 2, self.sum_sq_dev / (self.count - 1), np.nan)


@njit(cache=True)
def _merge_batches(count, mean, ssd, rows, cols, counts, values):
    p = 0
    for s in range(rows.size):
        c = counts[s]
        if c <= 0:
            continue
        if p + c > values.size:
            return p + c
        i, j = rows[s], cols[s]
        mb = 0.0
        for q in range(p, p + c):
            mb += values[q]
        mb /= c
        m2b = 0.0
        for q in range(p, p + c):
            m2b += (values[q] - mb) ** 2
        na = count[i, j]
        n = na + c
        d = mb - mean[i, j]
        mean[i, j] += d * c / n
        ssd[i, j] += m2b + d * d * na * c / n
        count[i, j] = n
        p += c
    return p


def worst_case_index(row) -> int:
    """Column with the largest mean in ``row``; the first one on ties."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1 or row.size == 0:
        raise ValueError("worst_case_index needs a non-empty 1-d row of means")
    return int(np.argmax(row))


def select_best(means) -> int:
    """Alternative whose worst-case mean is smallest (first one on ties)."""
    means = np.asarray(means, dtype=float)
    if means.ndim != 2 or means.size == 0:
        raise ValueError("select_best needs a non-empty k x m table of means")
    return int(np.argmin(means.max(axis=1)))
