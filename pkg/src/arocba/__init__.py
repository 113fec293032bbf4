"""Additive OCBA procedures for robust ranking and selection."""

__version__ = "0.1.0"

from .allocator import (AllocationTarget, IndexSet, build_index_set, solve_asymptotic_allocation,
                        theorem_allocation)
from .bounds import (Allocation, GroundTruth, additive_pics_bound, mc_pics, multiplicative_pics_bound,
                     numeric_min_f)
from .core import ScenarioGrid, ScenarioId, ScenarioStats, select_best, worst_case_index
from .experiments import (ExperimentReport, SweepSpec, allocation_profile, budget_sweep, estimate_pcs,
                          sensitivity_sweep)
from .problems import (InventoryParams, SyntheticProblem, build_inventory_problem, estimate_truth,
                       inventory_draw, make_custom, make_synthetic, small_instance)
from .procedures import (ProcedureConfig, Rule, RunTrace, most_starving_split, proportional_split,
                         run_equal_allocation, run_meta_ocba)
