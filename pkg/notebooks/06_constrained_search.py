# %% [markdown]
# # Constrained search and the FB-MP vs INT8 comparison
# Pick one (subnet, bitwidth) per block minimizing summed loss under size and
# latency budgets. Branch and bound is exact; brute force is the oracle.

# %%
import time
import numpy as np
from bwnas.lut import LutOptions, SyntheticLatency, build_luts
from bwnas.pareto import prune_luts
from bwnas.quant import QuantMenu
from bwnas.search import (SearchConstraints, branch_and_bound_search, brute_force_search,
                          concat_block_candidates)
from bwnas.space import SearchSpace
from bwnas.synthnet import make_calibration_set, make_teacher

space = SearchSpace.from_layers([2, 2, 2], [8, 16, 24], in_channels=8)
teacher = make_teacher(space, 0)
calib = make_calibration_set(space, teacher, 2)
luts = build_luts(space, teacher, QuantMenu(), calib, LutOptions(fit=True, latency=SyntheticLatency()))
fronts = prune_luts(luts, "size")

# %%
# below the smallest INT8 model only sub-8-bit policies remain feasible
from bwnas.errors import InfeasibleError

mixed = concat_block_candidates(fronts)
lo = sum(min(e.size_bits for e in b) for b in mixed.blocks)
hi = sum(b[0].size_bits for b in concat_block_candidates(fronts, [8]).blocks)
for budget in np.linspace(lo, hi, 8).astype(int):
    try:
        q8 = f"{branch_and_bound_search(fronts, SearchConstraints(int(budget), bitwidths=(8,))).objective:.4f}"
    except InfeasibleError:
        q8 = "infeasible"
    mp = branch_and_bound_search(fronts, SearchConstraints(int(budget)))
    print(f"{budget:>8}  int8 {q8:>10}  fb-mp {mp.objective:.4f}  policy {mp.policy}")

# %%
cons = SearchConstraints(int((lo + hi) / 2))
t0 = time.perf_counter(); brute = brute_force_search(luts, cons); t1 = time.perf_counter()
fast = branch_and_bound_search(prune_luts(luts, "size"), cons); t2 = time.perf_counter()
print(brute.objective == fast.objective, f"brute {t1 - t0:.3f}s, pruned b&b {t2 - t1:.4f}s")
print(fast.describe())
