# %% [markdown]
# # Search space and subnet ids
# Each block stacks L layers; every layer picks one (kernel, expansion) op.
# A subnet id is the mixed-radix number whose least significant digit is layer 0.

# %%
from bwnas.space import BlockSpec, decode_subnet, default_space, describe_space, encode_subnet

space = default_space()
print(describe_space(space))
print("subnets per block:", space.subnet_counts())

# %%
block = BlockSpec(0, 3, 16, 16)
ops = decode_subnet(block, 121)      # digits (1, 2, 3)
print([(o.kernel_size, o.expansion) for o in ops])
print(encode_subnet(block, ops))

# %%
# the space config is plain JSON and hashes to a stable digest
import json
from bwnas.space import space_hash

print(json.dumps(space.to_dict())[:120], "...")
print(space_hash(space))
