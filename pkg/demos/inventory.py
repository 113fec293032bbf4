"""(s, S) inventory on a small policy grid: oracle truth, then PCS.

The oracle runs 2000 replications per scenario, which is enough to pick the
best policy on this grid but not for tight PCS work (use 2e4 there).
"""

from arocba import ProcedureConfig, build_inventory_problem, estimate_pcs, estimate_truth

sim = build_inventory_problem([700, 750], [1500, 1600], [40, 80])
truth = estimate_truth(sim, 2000, seed=1)
print("mean daily cost per (policy, demand mean):")
for i, (s, S) in enumerate(sim.policies):
    print(f"  s={s:g} S={S:g}", [round(float(x), 1) for x in truth.truth.mu[i]])
s, S = sim.policies[truth.best]
print(f"oracle best s={s:g} S={S:g} (ambiguous={truth.ambiguous})")

cfg = ProcedureConfig(10, 10, 50 * sim.k * sim.m)
for proc in ("AR-OCBA", "EA"):
    pcs, se = estimate_pcs(sim, proc, cfg, 50, 0, truth=truth)
    print(f"{proc:8s} PCS={pcs:.2f} +/- {se:.2f}")
