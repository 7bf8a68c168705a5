# %% [markdown]
# # NSR loss and the synthetic teacher/student
# The teacher is a fixed-op MBConv stack. Each student block is scored on the
# teacher's block input/output pair; only the last projection may be refit.

# %%
import numpy as np
from bwnas.nsr import nsr_loss
from bwnas.space import SearchSpace
from bwnas.synthnet import (evaluate_block, fit_projection, make_calibration_set,
                            make_student_block, make_teacher)

print(nsr_loss(np.array([[[1.0, -1.0]]]), np.zeros((1, 1, 2))))   # 2.0

# %%
space = SearchSpace.from_layers([2, 1], [8, 16], in_channels=8)
teacher = make_teacher(space, seed=0)
calib = make_calibration_set(space, teacher, seed=2)
x, y = calib.inputs[0], calib.targets[0]

net = make_student_block(space.blocks[0], 7, seed=1)
fitted = fit_projection(net, x, y)
for bits in (None, 8, 6, 4):
    print(bits, evaluate_block(net, x, y, bits), evaluate_block(fitted, x, y, bits))
