"""Upper bounds on the probability of incorrect selection, and oracles.

The two bounds are sums of normal tail probabilities. The additive one has
one term per competitor of the reference scenario (k + m - 2 terms); the
multiplicative one compares every scenario of the best alternative against
every other alternative's worst case (m(k - 1) terms).

``mc_pics`` and ``numeric_min_f`` are brute-force oracles used to check the
bounds and the closed-form allocation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_ndtr, logsumexp, ndtr

from .core import ScenarioId

# scipy's ndtr is accurate to machine precision over the whole real line,
# well inside the 1e-10 absolute error budget.
norm_cdf = ndtr


@dataclass(frozen=True)
class GroundTruth:
    """True scenario means and variances of a problem.

    ``best`` and ``worst_of`` follow the selection rule's tie-breaking. Ties
    for the best alternative are allowed here (``unique_best`` is then False);
    operations that need a unique best check it themselves.
    """

    mu: np.ndarray
    sigma2: np.ndarray
    best: int = field(init=False)
    worst_of: np.ndarray = field(init=False)

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        sigma2 = np.array(self.sigma2, dtype=float)
        if mu.ndim != 2 or mu.size == 0:
            raise ValueError("mu must be a non-empty k x m table")
        if sigma2.shape != mu.shape:
            raise ValueError(f"sigma2 shape {sigma2.shape} does not match mu shape {mu.shape}")
        if not np.all(sigma2 > 0):
            raise ValueError("all variances must be strictly positive")
        mu.setflags(write=False)
        sigma2.setflags(write=False)
        worst = mu.argmax(axis=1)
        worst.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "worst_of", worst)
        object.__setattr__(self, "best", int(np.argmin(mu.max(axis=1))))

    @property
    def k(self) -> int:
        return self.mu.shape[0]

    @property
    def m(self) -> int:
        return self.mu.shape[1]

    @property
    def worst_means(self) -> np.ndarray:
        return self.mu.max(axis=1)

    @property
    def unique_best(self) -> bool:
        wc = self.worst_means
        return bool(np.sum(wc == wc[self.best]) == 1)

    def relevant(self) -> list[ScenarioId]:
        """The k + m - 1 scenarios the additive bound depends on.

        Order: reference scenario, the other alternatives' worst cases
        (ascending i), then the best alternative's other columns (ascending j).
        """
        b = self.best
        wb = int(self.worst_of[b])
        out = [ScenarioId(b, wb)]
        out += [ScenarioId(i, int(self.worst_of[i])) for i in range(self.k) if i != b]
        out += [ScenarioId(b, j) for j in range(self.m) if j != wb]
        return out

    def gaps(self) -> np.ndarray:
        """Mean differences between the reference and each other relevant scenario."""
        ids = self.relevant()
        ref = self.mu[ids[0]]
        return np.array([abs(self.mu[s] - ref) for s in ids[1:]])


@dataclass(frozen=True)
class Allocation:
    """Relaxed (real-valued) per-scenario sample sizes."""

    n: np.ndarray

    def __post_init__(self):
        n = np.array(self.n, dtype=float)
        if n.ndim != 2:
            raise ValueError("allocation must be a k x m table")
        if np.any(n < 0) or not np.all(np.isfinite(n)):
            raise ValueError("sample sizes must be finite and nonnegative")
        n.setflags(write=False)
        object.__setattr__(self, "n", n)

    @property
    def total(self) -> float:
        return float(self.n.sum())

    @classmethod
    def equal(cls, k: int, m: int, total: float) -> "Allocation":
        return cls(np.full((k, m), total / (k * m)))


def _check_shapes(truth: GroundTruth, alloc: Allocation) -> np.ndarray:
    if alloc.n.shape != truth.mu.shape:
        raise ValueError(f"allocation shape {alloc.n.shape} does not match problem {truth.mu.shape}")
    return alloc.n


def _additive_terms(truth: GroundTruth, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-term (gap, standard deviation of the difference) for the additive bound."""
    ids = truth.relevant()
    ref = ids[0]
    if n[ref] <= 0 or any(n[s] <= 0 for s in ids[1:]):
        bad = [s.label() for s in ids if n[s] <= 0]
        raise ValueError(f"relevant scenarios need positive sample sizes; zero at {bad}")
    mu, s2 = truth.mu, truth.sigma2
    gap = np.empty(len(ids) - 1)
    sd = np.empty(len(ids) - 1)
    for r, s in enumerate(ids[1:]):
        # competitors of another alternative sit above the reference; the
        # best alternative's other columns sit below it
        gap[r] = mu[s] - mu[ref] if s.i != ref.i else mu[ref] - mu[s]
        sd[r] = np.sqrt(s2[s] / n[s] + s2[ref] / n[ref])
    return gap, sd


def additive_pics_bound(truth: GroundTruth, alloc: Allocation) -> float:
    n = _check_shapes(truth, alloc)
    gap, sd = _additive_terms(truth, n)
    return float(np.sum(norm_cdf(-gap / sd)))


def multiplicative_pics_bound(truth: GroundTruth, alloc: Allocation) -> float:
    n = _check_shapes(truth, alloc)
    b = truth.best
    mu, s2 = truth.mu, truth.sigma2
    if np.any(n[b] <= 0):
        raise ValueError(f"every scenario of the best alternative {b + 1} needs a positive sample size")
    total = 0.0
    for i in range(truth.k):
        if i == b:
            continue
        w = truth.worst_of[i]
        if n[i, w] <= 0:
            raise ValueError(f"scenario {(i + 1, int(w) + 1)} needs a positive sample size")
        gap = mu[i, w] - mu[b]
        sd = np.sqrt(s2[b] / n[b] + s2[i, w] / n[i, w])
        total += float(np.sum(norm_cdf(-gap / sd)))
    return total


def mc_pics(truth: GroundTruth, alloc: Allocation, reps: int, seed: int,
            chunk: int = 200_000) -> tuple[float, float]:
    """Monte Carlo estimate of the probability of incorrect selection.

    Each replication draws every sample mean from its exact normal law and
    applies the minimax selection rule. Returns (estimate, binomial stderr).
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    n = _check_shapes(truth, alloc)
    if np.any(n <= 0):
        raise ValueError("mc_pics needs positive sample sizes everywhere")
    rng = np.random.default_rng(seed)
    sd = np.sqrt(truth.sigma2 / n)
    wrong = 0
    per = max(1, chunk // truth.mu.size)
    done = 0
    while done < reps:
        b = min(per, reps - done)
        xbar = truth.mu + sd * rng.standard_normal((b, truth.k, truth.m))
        picked = xbar.max(axis=2).argmin(axis=1)
        wrong += int(np.count_nonzero(picked != truth.best))
        done += b
    p = wrong / reps
    return p, float(np.sqrt(p * (1 - p) / reps))


def log_f(truth: GroundTruth, alloc: Allocation) -> float:
    """Natural log of the additive bound, stable when the bound underflows."""
    n = _check_shapes(truth, alloc)
    gap, sd = _additive_terms(truth, n)
    return float(logsumexp(log_ndtr(-gap / sd)))


class OracleConvergenceError(RuntimeError):
    def __init__(self, message: str, best: Allocation, log_value: float):
        super().__init__(message)
        self.best = best
        self.log_value = log_value


def _relevant_objective(gap, v, N):
    """log f and its gradient w.r.t. softmax logits over the relevant coordinates."""
    v1, vr = v[0], v[1:]

    def fun(theta):
        p = np.exp(theta - logsumexp(theta))
        n = N * p
        s = v1 / n[0] + vr / n[1:]
        z = gap / np.sqrt(s)
        L = log_ndtr(-z)
        lf = logsumexp(L)
        w = np.exp(L - lf)
        # d log Phi(-z)/dz = -phi(z)/Phi(-z)
        dz = -np.exp(-0.5 * z * z - 0.5 * np.log(2 * np.pi) - L)
        common = w * dz * 0.5 * gap * s ** -1.5
        g = np.empty_like(n)
        g[0] = np.sum(common) * v1 / n[0] ** 2
        g[1:] = common * vr / n[1:] ** 2
        gn = g * n
        return lf, gn - p * gn.sum()

    return fun


def numeric_min_f(truth: GroundTruth, N: float, iterations: int = 2000,
                  restarts: int = 10, seed: int = 0) -> Allocation:
    """Brute-force minimiser of the additive bound under sum(n) = N.

    Only the k + m - 1 relevant scenarios are searched; the bound does not
    depend on the rest, and they are left at zero. The bound is minimised in
    log space through a softmax parametrisation of the simplex, using
    L-BFGS from ``restarts`` random starting points.
    """
    k, m = truth.k, truth.m
    if k * m > 25:
        raise ValueError("numeric_min_f is a desk-scale oracle: k*m must be <= 25")
    K = k + m - 1
    if N < K:
        raise ValueError(f"N must be at least k+m-1={K}")
    ids = truth.relevant()
    gap = truth.gaps()
    v = np.array([truth.sigma2[s] for s in ids])
    fun = _relevant_objective(gap, v, float(N))
    rng = np.random.default_rng(seed)

    # boxed logits keep every share above ~1e-26 so the objective stays finite
    box = [(-30.0, 30.0)] * K
    results = []
    for _ in range(restarts):
        theta0 = rng.normal(scale=1.0, size=K)
        res = minimize(fun, theta0, jac=True, method="L-BFGS-B", bounds=box,
                       options={"maxiter": iterations, "ftol": 1e-15, "gtol": 1e-12})
        results.append(res)
    best = min(results, key=lambda r: r.fun)

    n = np.zeros((k, m))
    p = np.exp(best.x - logsumexp(best.x))
    for s, ps in zip(ids, p):
        n[s] = N * ps
    alloc = Allocation(n)

    grad_norm = float(np.max(np.abs(fun(best.x)[1])))
    scale = max(1.0, abs(best.fun))
    if not best.success and grad_norm > 1e-6 * scale:
        raise OracleConvergenceError(
            f"numeric_min_f did not converge in {iterations} iterations "
            f"(log f={best.fun:.6g}, |grad|={grad_norm:.3g})", alloc, float(best.fun))
    return alloc
