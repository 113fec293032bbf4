import math
import warnings

import numpy as np
import pytest

from arocba.bounds import GroundTruth
from arocba.problems import (DEFAULT_BIG_S_GRID, DEFAULT_DEMAND_MEANS, DEFAULT_S_GRID, InventoryParams,
                             build_inventory_problem, draw_batch, estimate_truth, gaussian_draw,
                             inventory_draw, make_custom, make_synthetic, mm_variances,
                             read_truth_cache, small_instance, write_truth_cache)


def slow_inventory(params, demand, lead):
    """Day-by-day reference simulation written independently of the kernel."""
    on_hand = params.S if params.initial_inventory is None else params.initial_inventory
    arrivals = {}
    outstanding = 0.0
    cost = 0.0
    for t in range(params.horizon):
        q = arrivals.pop(t, 0.0)
        on_hand += q
        outstanding -= q
        on_hand -= demand[t]
        cost += params.holding_cost * max(on_hand, 0.0)
        if on_hand + outstanding < params.s:
            order = params.S - (on_hand + outstanding)
            cost += params.fixed_order_cost + params.unit_cost * order
            outstanding += order
            due = t + 1 + int(lead[t])
            arrivals[due] = arrivals.get(due, 0.0) + order
    return cost / params.horizon


def test_mm_formula_values():
    p = make_synthetic(20, 5, "CV")
    assert p.truth.mu[0, 0] == pytest.approx(-0.7)
    assert p.truth.mu[19, 4] == pytest.approx(8.0)
    assert np.all(p.truth.sigma2 == 256.0)
    assert mm_variances(1, 1, "IV")[0, 0] == pytest.approx((12 + math.sqrt(1.2)) ** 2)
    assert mm_variances(1, 1, "IV")[0, 0] == pytest.approx(171.49, abs=0.01)
    assert mm_variances(2, 3, "DV")[1, 2] == pytest.approx((12 + 1 / 3.4) ** 2)


@pytest.mark.parametrize("kind", ["CV", "IV", "DV"])
def test_mm_ordering(kind):
    t = make_synthetic(7, 4, kind).truth
    assert t.best == 0
    assert np.all(t.worst_of == 0)
    assert make_synthetic(7, 4, kind).label == f"MM-{kind}"


def test_synthetic_guards():
    with pytest.raises(ValueError):
        make_synthetic(1, 3)
    with pytest.raises(ValueError):
        mm_variances(2, 2, "XV")
    with pytest.raises(ValueError):
        make_custom([[0.0, 1.0]], [[1.0, 0.0]])


def test_gaussian_moments():
    p = make_custom([[3.0]], [[4.0]])
    x = gaussian_draw(p, 0, 0, np.random.default_rng(5), 1_000_000)
    se = 2.0 / 1000
    assert abs(x.mean() - 3.0) < 3 * se
    # var of the sample variance for a normal is 2 sigma^4 / (n - 1)
    assert abs(x.var(ddof=1) - 4.0) < 3 * math.sqrt(2 * 16 / (x.size - 1))


def test_gaussian_deterministic():
    p = small_instance()
    a = gaussian_draw(p, 1, 2, np.random.default_rng(1), 10)
    b = gaussian_draw(p, 1, 2, np.random.default_rng(1), 10)
    np.testing.assert_array_equal(a, b)


def test_draw_batch_fallback_matches_fast_path():
    p = make_synthetic(3, 2)

    class Plain:
        k, m = 3, 2

        def draw(self, i, j, rng, size=None):
            return p.draw(i, j, rng, size)

    rows, cols, counts = np.array([0, 2, 1]), np.array([1, 0, 1]), np.array([2, 0, 3])
    a = draw_batch(p, rows, cols, counts, np.random.default_rng(4))
    b = draw_batch(Plain(), rows, cols, counts, np.random.default_rng(4))
    np.testing.assert_allclose(a, b, rtol=1e-15)


def test_inventory_matches_reference_simulation():
    params = InventoryParams(700, 1500, 55, horizon=120)
    rng = np.random.default_rng(9)
    got = inventory_draw(params, rng, 5)
    rng = np.random.default_rng(9)
    demand = rng.exponential(55, (5, 120))
    lead = rng.poisson(6.0, (5, 120))
    want = [slow_inventory(params, demand[r], lead[r]) for r in range(5)]
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_inventory_zero_demand_is_pure_holding():
    params = InventoryParams(700, 1500, 0.0, horizon=30)
    assert inventory_draw(params, np.random.default_rng(0)) == pytest.approx(1500.0)
    params = InventoryParams(700, 1500, 0.0, horizon=30, initial_inventory=900, holding_cost=2)
    assert inventory_draw(params, np.random.default_rng(0)) == pytest.approx(1800.0)


def test_inventory_deterministic():
    params = InventoryParams(750, 1600, 60, horizon=200)
    assert inventory_draw(params, np.random.default_rng(3)) == inventory_draw(params, np.random.default_rng(3))


def test_inventory_params_validation():
    with pytest.raises(ValueError):
        InventoryParams(1500, 1500, 50)
    with pytest.raises(ValueError):
        InventoryParams(700, 1500, 50, horizon=0)
    with pytest.raises(ValueError):
        InventoryParams(700, 1500, 50, unit_cost=-1)


def test_inventory_cost_monotone_in_demand():
    # with these defaults a busier system orders more often and carries less
    # stock, so the cost falls with demand and the worst case is the lowest mean
    params = [InventoryParams(700, 1500, d) for d in (40, 60, 80)]
    means = [inventory_draw(p, np.random.default_rng(1), 10_000).mean() for p in params]
    assert means[0] > means[1] > means[2]


def test_default_grid_shape():
    sim = build_inventory_problem(DEFAULT_S_GRID, DEFAULT_BIG_S_GRID, DEFAULT_DEMAND_MEANS)
    assert (sim.k, sim.m, sim.k * sim.m) == (143, 9, 1287)
    assert sim.policies[0] == (700, 1500) and sim.policies[1] == (700, 1550)
    assert sim.demand_means == tuple(float(d) for d in DEFAULT_DEMAND_MEANS)


def test_small_grid_and_drop_warning():
    sim = build_inventory_problem([700, 800], [1500, 1600], [40, 60, 80])
    assert (sim.k, sim.m) == (4, 3)
    with pytest.warns(UserWarning, match="s >= S"):
        sim = build_inventory_problem([700, 1600], [1500, 1600], [40])
    assert sim.policies == ((700, 1500), (700, 1600))
    with pytest.raises(ValueError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            build_inventory_problem([2000], [1500], [40])


def test_inventory_overrides_reach_params():
    sim = build_inventory_problem([700], [1500], [40, 50], horizon=10, unit_cost=3.0)
    p = sim.params(0, 1)
    assert (p.s, p.S, p.demand_mean, p.horizon, p.unit_cost) == (700, 1500, 50.0, 10, 3.0)


def test_estimate_truth_synthetic_self_consistent():
    p = make_synthetic(4, 3, "IV")
    est = estimate_truth(p, 4000, seed=2)
    z = np.abs(est.truth.mu - p.truth.mu) / est.stderr
    assert np.all(z < 4)
    assert est.best == 0 and not est.ambiguous


def test_estimate_truth_minimal_reps():
    est = estimate_truth(small_instance(), 2, seed=0)
    assert np.all(np.isfinite(est.truth.sigma2))
    with pytest.raises(ValueError):
        estimate_truth(small_instance(), 1, seed=0)


def test_estimate_truth_flags_ambiguity():
    p = make_custom([[0.0], [0.001]], [[1.0], [1.0]])
    assert estimate_truth(p, 100, seed=0).ambiguous


def test_truth_cache_round_trip(tmp_path):
    sim = build_inventory_problem([700, 750], [1500], [40, 80], horizon=40)
    est = estimate_truth(sim, 20, seed=1)
    path = tmp_path / "truth.csv"
    write_truth_cache(path, sim, est)
    back, policies, demands = read_truth_cache(path)
    np.testing.assert_array_equal(back.truth.mu, est.truth.mu)
    np.testing.assert_array_equal(back.truth.sigma2, est.truth.sigma2)
    np.testing.assert_array_equal(back.stderr, est.stderr)
    assert back.reps == 20 and back.ambiguous == est.ambiguous
    assert policies == [(700.0, 1500.0), (750.0, 1500.0)] and demands == [40.0, 80.0]


def test_truth_cache_rejects_partial(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("scenario_i,scenario_j,s,S,demand_mean,reps,mean,variance,stderr\n"
                    "1,1,700,1500,40,10,1.0,1.0,0.1\n2,2,750,1500,80,10,1.0,1.0,0.1\n")
    with pytest.raises(ValueError):
        read_truth_cache(path)


def test_ground_truth_small_instance():
    t = small_instance().truth
    assert isinstance(t, GroundTruth) and t.best == 0 and t.unique_best
