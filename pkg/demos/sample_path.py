"""One AR-OCBA run on the 3 x 3 instance, printing how counts build up."""

from arocba import ProcedureConfig, small_instance
from arocba.experiments import allocation_profile

problem = small_instance()
cfg = ProcedureConfig(n0=20, delta=20, total_budget=200 * 9)
prof = allocation_profile(problem, cfg, seed=7)

step = max(1, len(prof.t) // 8)
for t in list(prof.t[::step]) + [prof.t[-1]]:
    c = prof.counts[t]
    print(f"round {t:3d}  N_used={prof.n_used[t]:5d}  counts={c.ravel().tolist()}")
print("selected alternative", prof.selection + 1)
