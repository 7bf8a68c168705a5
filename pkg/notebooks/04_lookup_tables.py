# %% [markdown]
# # Building and persisting the N x B lookup tables
# One LUT per (block, bitwidth); every subnet gets loss, size in bits and latency.

# %%
import tempfile
from bwnas.lut import LutOptions, SyntheticLatency, build_luts, make_manifest, read_luts, write_luts
from bwnas.quant import QuantMenu
from bwnas.space import SearchSpace
from bwnas.synthnet import make_calibration_set, make_teacher

space = SearchSpace.from_layers([2, 2], [8, 16], in_channels=8)
teacher = make_teacher(space, 0)
calib = make_calibration_set(space, teacher, 2)
luts = build_luts(space, teacher, QuantMenu(), calib,
                  LutOptions(fit=True, latency=SyntheticLatency()))
for lut in luts:
    best = min(lut.entries, key=lambda e: e.loss)
    print(f"block {lut.block} w{lut.bitwidth}: {len(lut)} subnets, best {best.subnet_id} "
          f"loss {best.loss:.4f} size {best.size_bits} latency {best.latency_us}")

# %%
# latency is attached at 8 bits only unless latency_all_bits is set
with tempfile.TemporaryDirectory() as d:
    write_luts(luts, make_manifest(space, (4, 6, 8)), d)
    back, manifest = read_luts(d, space)
    print(back == luts, manifest["space_hash"][:12])
