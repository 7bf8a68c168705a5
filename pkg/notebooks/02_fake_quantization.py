# %% [markdown]
# # Per-channel fake quantization
# Symmetric signed grid, scale = max|w| / (2^(b-1) - 1), ties rounded away from zero.

# %%
import numpy as np
from bwnas.quant import QuantScheme, WeightTensor, fake_quantize

w = WeightTensor(np.array([[-1.0, 1.0, 0.5], [0.2, -0.1, 0.05]]))
for bits in (4, 6, 8):
    print(bits, fake_quantize(w, QuantScheme(bits)).data[0])

# %%
# RMSE shrinks roughly 4x per extra 2 bits
rng = np.random.default_rng(0)
x = rng.standard_normal((64, 64))
for bits in (4, 6, 8):
    q = fake_quantize(WeightTensor(x), QuantScheme(bits)).data
    print(f"w{bits}: rmse {np.sqrt(np.mean((x - q) ** 2)):.5f}")
