# %% [markdown]
# # Pareto pruning
# Entries dominated on (loss, size[, latency]) can never be part of a
# constrained optimum, so each LUT shrinks to its front before the search.

# %%
from bwnas.lut import LutEntry, LutOptions, SyntheticLatency, build_luts
from bwnas.pareto import pareto_front, prune_luts
from bwnas.quant import QuantMenu
from bwnas.space import SearchSpace
from bwnas.synthnet import make_calibration_set, make_teacher

toy = [LutEntry(0, 8, 1.0, 10), LutEntry(1, 8, 2.0, 5), LutEntry(2, 8, 3.0, 7)]
print([(e.loss, e.size_bits) for e in pareto_front(toy, "size").entries])

# %%
space = SearchSpace.from_layers([3], [16], in_channels=8)
teacher = make_teacher(space, 0)
calib = make_calibration_set(space, teacher, 2)
luts = build_luts(space, teacher, QuantMenu(), calib,
                  LutOptions(fit=True, latency=SyntheticLatency(), latency_all_bits=True))
for metrics in ("size", "size,latency"):
    fronts = prune_luts(luts, metrics)
    print(metrics, [len(l) for l in luts], "->", [len(f) for f in fronts])
print("merged:", [len(f) for f in prune_luts(luts, "size", merge_bitwidths=True)])
