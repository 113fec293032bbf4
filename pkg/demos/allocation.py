"""Closed-form allocation on the 3 x 3 instance, next to both bounds.

The budget goes to the five relevant scenarios only: the best
alternative's whole row plus the worst case of each other alternative.
"""

import numpy as np

from arocba import Allocation, additive_pics_bound, multiplicative_pics_bound, small_instance, theorem_allocation

truth = small_instance().truth
N = 5140 * 9

alloc = theorem_allocation(truth, N)
print("closed-form shares (rows: alternatives, cols: distributions)")
print(np.round(alloc.n / N, 4))

# the bounds need positive sizes everywhere; give irrelevant scenarios one draw
padded = Allocation(np.maximum(alloc.n, 1.0))
equal = Allocation.equal(3, 3, N)
for name, a in (("closed form", padded), ("equal split", equal)):
    print(f"{name:12s} additive={additive_pics_bound(truth, a):.3e} "
          f"multiplicative={multiplicative_pics_bound(truth, a):.3e}")
