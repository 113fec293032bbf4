"""Self-checks of the allocator and bounds against independent oracles.

Each check returns a :class:`Check` with the worst discrepancy it measured.
Checks flagged ``gate=False`` are reported but do not affect the verdict.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .allocator import theorem_allocation
from .bounds import (Allocation, GroundTruth, additive_pics_bound, log_f, mc_pics,
                     multiplicative_pics_bound, numeric_min_f)


@dataclass
class Check:
    name: str
    passed: bool
    discrepancy: float
    detail: str = ""
    gate: bool = True
    seconds: float = 0.0

    def line(self) -> str:
        status = ("PASS" if self.passed else "FAIL") if self.gate else "INFO"
        return f"[{status}] {self.name}: discrepancy={self.discrepancy:.3g} {self.detail} ({self.seconds:.1f}s)"


def random_truth(rng: np.random.Generator, k: int, m: int, min_gap: float = 0.0) -> GroundTruth:
    """Random instance with a unique best alternative.

    Worst-case gaps of non-best alternatives are at least ``min_gap`` (and
    always positive); variances lie in [0.25, 4].
    """
    mu = rng.normal(size=(k, m))
    worst = mu.max(axis=1)
    b = int(np.argmin(worst))
    for i in range(k):
        if i != b and worst[i] - worst[b] < max(min_gap, 1e-3):
            mu[i, int(np.argmax(mu[i]))] = worst[b] + max(min_gap, 1e-3) + rng.uniform(0, 1)
    sigma2 = rng.uniform(0.25, 4.0, size=(k, m))
    return GroundTruth(mu, sigma2)


def random_shape(rng, max_k=5, max_m=5, max_relevant=None):
    while True:
        k = int(rng.integers(2, max_k + 1))
        m = int(rng.integers(1, max_m + 1))
        if max_relevant is None or k + m - 1 <= max_relevant:
            return k, m


def relevant_values(truth: GroundTruth, alloc: Allocation):
    ids = truth.relevant()
    n = np.array([alloc.n[s] for s in ids])
    sd = np.sqrt([truth.sigma2[s] for s in ids])
    gap = truth.gaps()
    return ids, n, sd, gap


def check_ratio_identities(instances: int = 50, seed: int = 1) -> Check:
    """n_p (gap_p / sd_p)^2 is the same for all competitors, and the reference
    gets sd_0 * sqrt(sum n_r^2 / sd_r^2); budget closes."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        truth = random_truth(rng, *random_shape(rng), min_gap=0.05)
        N = float(rng.uniform(10, 1e6))
        alloc = theorem_allocation(truth, N)
        _, n, sd, gap = relevant_values(truth, alloc)
        if gap.size == 0:
            continue
        scaled = n[1:] * (gap / sd[1:]) ** 2
        worst = max(worst, float(np.ptp(scaled) / scaled.mean()))
        ref = sd[0] * np.sqrt(np.sum(n[1:] ** 2 / sd[1:] ** 2))
        worst = max(worst, abs(n[0] - ref) / ref, abs(alloc.total - N) / N)
    return Check("closed-form ratio identities", worst <= 1e-9, worst, "(tol 1e-9 relative)")


def check_zero_allocation(instances: int = 50, seed: int = 2) -> Check:
    rng = np.random.default_rng(seed)
    nonzero = 0
    for _ in range(instances):
        truth = random_truth(rng, *random_shape(rng, 8, 8))
        alloc = theorem_allocation(truth, 1e5)
        mask = np.ones(truth.mu.shape, dtype=bool)
        for s in truth.relevant():
            mask[s] = False
        nonzero += int(np.count_nonzero(alloc.n[mask]))
    return Check("zero allocation outside the relevant set", nonzero == 0, float(nonzero),
                 f"(nonzero entries over {instances} instances)")


def check_m1_coincidence(instances: int = 100, seed: int = 3) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        k = int(rng.integers(2, 10))
        truth = random_truth(rng, k, 1)
        alloc = Allocation(rng.uniform(1, 100, size=(k, 1)))
        worst = max(worst, abs(additive_pics_bound(truth, alloc) - multiplicative_pics_bound(truth, alloc)))
    return Check("additive == multiplicative bound when m = 1", worst <= 1e-12, worst, "(tol 1e-12)")


def check_bound_validity(instances: int = 50, reps: int = 100_000, seed: int = 4) -> Check:
    """Monte Carlo PICS never exceeds either bound by more than 3 standard errors."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for r in range(instances):
        truth = random_truth(rng, *random_shape(rng))
        alloc = Allocation(rng.uniform(1, 50, size=truth.mu.shape))
        p, se = mc_pics(truth, alloc, reps, seed=10_000 + r)
        for bound in (additive_pics_bound(truth, alloc), multiplicative_pics_bound(truth, alloc)):
            worst = max(worst, p - bound - 3 * se)
    return Check("Monte Carlo PICS <= each bound + 3 se", worst <= 0, float(worst),
                 f"(max excess over {instances} instances, {reps} reps)")


def check_monotonicity(instances: int = 30, seed: int = 5) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        truth = random_truth(rng, *random_shape(rng))
        n = rng.uniform(1, 50, size=truth.mu.shape)
        base = additive_pics_bound(truth, Allocation(n))
        for s in truth.relevant():
            bumped = n.copy()
            bumped[s] *= 1.5
            worst = max(worst, additive_pics_bound(truth, Allocation(bumped)) - base)
    return Check("additive bound nonincreasing in relevant sample sizes", worst <= 1e-15, worst)


def check_oracle_dominance(instances: int = 20, N: float = 1e5, seed: int = 6) -> Check:
    """The numeric minimiser is never beaten by the closed form (it is a true minimiser)."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for r in range(instances):
        truth = random_truth(rng, *random_shape(rng, max_relevant=6), min_gap=0.2)
        oracle = numeric_min_f(truth, N, seed=r)
        closed = theorem_allocation(truth, N)
        lc = log_f(truth, closed)
        worst = max(worst, (log_f(truth, oracle) - lc) / max(1.0, abs(lc)))
    return Check("numeric optimum <= closed-form value of the bound", worst <= 1e-9, float(worst),
                 "(max relative excess of log f)")


def closed_form_vs_oracle(instances: int = 20, N: float = 1e5, seed: int = 7) -> Check:
    """Largest per-coordinate relative gap between the closed form and the
    numeric minimiser of the finite-budget bound. Informational: the closed
    form neglects the reference scenario's variance term in each competitor's
    balance equation, so the two differ when the reference does not dominate."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for r in range(instances):
        truth = random_truth(rng, *random_shape(rng, max_relevant=6), min_gap=0.2)
        oracle = numeric_min_f(truth, N, seed=r)
        closed = theorem_allocation(truth, N)
        ids = truth.relevant()
        a = np.array([oracle.n[s] for s in ids])
        c = np.array([closed.n[s] for s in ids])
        worst = max(worst, float(np.max(np.abs(c - a) / a)))
    return Check("closed form vs numeric minimiser (per coordinate)", worst <= 0.02, worst,
                 "(relative; 2% target)", gate=False)


def run_checks(quick: bool = False) -> list[Check]:
    scale = 5 if quick else 1
    plan = [
        (check_ratio_identities, {"instances": 50 // scale}),
        (check_zero_allocation, {"instances": 50 // scale}),
        (check_m1_coincidence, {"instances": 100 // scale}),
        (check_monotonicity, {"instances": 30 // scale}),
        (check_bound_validity, {"instances": 50 // scale, "reps": 100_000 // scale}),
        (check_oracle_dominance, {"instances": 20 // scale}),
        (closed_form_vs_oracle, {"instances": 20 // scale}),
    ]
    out = []
    for fn, kw in plan:
        t = time.perf_counter()
        chk = fn(**kw)
        chk.seconds = time.perf_counter() - t
        out.append(chk)
    return out
