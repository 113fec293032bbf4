"""PCS of AR-OCBA, equal allocation and the most-starving rule on MM-CV.

Runs in about half a minute on one core; raise
REPS for tighter standard errors.
"""

from arocba import SweepSpec, budget_sweep, make_synthetic

REPS = 1000

spec = SweepSpec("MM-CV", make_synthetic(20, 5, "CV"), ("AR-OCBA", "EA", "AR-OCBA-Starving"),
                 (10, 30, 50), replications=REPS, base_seed=0)
report = budget_sweep(spec)
for row in report.rows:
    print(f"{row.procedure:17s} c={row.c:2d} N={row.N:5d} PCS={row.pcs:.3f} +/- {row.stderr:.3f}")
