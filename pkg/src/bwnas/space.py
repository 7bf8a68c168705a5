"""Block-wise search space: block geometry, MBConv op menu, subnet ids.

A subnet of a block assigns one op (kernel size, expansion ratio) to each
layer.  Its id is the mixed-radix number whose digit ``k`` is the menu index
of layer ``k``'s op, with layer 0 as the least-significant digit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import SubnetRangeError, ValidationError

DEFAULT_LAYERS = (3, 3, 4, 4, 3, 1)
DEFAULT_CHANNELS = (24, 32, 64, 96, 160, 320)
DEFAULT_IN_CHANNELS = 24
DEFAULT_KERNELS = (3, 5, 7)
DEFAULT_EXPANSIONS = (3, 6)


@dataclass(frozen=True, order=True)
class OpChoice:
    kernel_size: int
    expansion: int

    def __post_init__(self):
        if self.kernel_size < 1 or self.expansion < 1:
            raise ValidationError(f"invalid op {self}")

    def __str__(self):
        return f"k{self.kernel_size}e{self.expansion}"


def default_op_menu() -> tuple[OpChoice, ...]:
    return tuple(OpChoice(k, e) for k in DEFAULT_KERNELS for e in DEFAULT_EXPANSIONS)


@dataclass(frozen=True)
class BlockSpec:
    index: int
    num_layers: int
    in_channels: int
    out_channels: int
    op_menu: tuple[OpChoice, ...] = field(default_factory=default_op_menu)

    def __post_init__(self):
        object.__setattr__(self, "op_menu", tuple(self.op_menu))
        if self.index < 0:
            raise ValidationError(f"block index must be >= 0, got {self.index}")
        if self.num_layers < 1:
            raise ValidationError(f"block {self.index}: num_layers must be >= 1")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValidationError(f"block {self.index}: channel counts must be positive")
        menu = self.op_menu
        if not menu:
            raise ValidationError(f"block {self.index}: empty op menu")
        if len(set(menu)) != len(menu):
            raise ValidationError(f"block {self.index}: duplicate ops in menu")
        if list(menu) != sorted(menu):
            raise ValidationError(
                f"block {self.index}: op menu must be in (kernel, expansion) order")

    @property
    def num_subnets(self) -> int:
        return len(self.op_menu) ** self.num_layers

    def layer_channels(self, layer: int) -> tuple[int, int]:
        """(c_in, c_out) of a layer; only layer 0 changes the width."""
        c_in = self.in_channels if layer == 0 else self.out_channels
        return c_in, self.out_channels


@dataclass(frozen=True, order=True)
class SubnetId:
    block_index: int
    value: int

    def __int__(self):
        return self.value


@dataclass(frozen=True)
class SearchSpace:
    blocks: tuple[BlockSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ValidationError("search space needs at least one block")
        for i, b in enumerate(self.blocks):
            if b.index != i:
                raise ValidationError(f"block at position {i} has index {b.index}")
            if i > 0 and b.in_channels != self.blocks[i - 1].out_channels:
                raise ValidationError(
                    f"block {i} input channels {b.in_channels} != block {i - 1} "
                    f"output channels {self.blocks[i - 1].out_channels}")

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def subnet_counts(self) -> list[int]:
        return [b.num_subnets for b in self.blocks]

    def to_dict(self) -> dict:
        return space_to_dict(self)

    def content_hash(self) -> str:
        return space_hash(self)

    @classmethod
    def from_layers(cls, layers: Sequence[int], channels: Sequence[int],
                    in_channels: int | None = None,
                    op_menu: Iterable[OpChoice] | None = None) -> "SearchSpace":
        if len(layers) != len(channels):
            raise ValidationError("layers and channels must have equal length")
        menu = tuple(op_menu) if op_menu is not None else default_op_menu()
        c_prev = channels[0] if in_channels is None else in_channels
        blocks = []
        for i, (nl, ch) in enumerate(zip(layers, channels)):
            blocks.append(BlockSpec(i, nl, c_prev, ch, menu))
            c_prev = ch
        return cls(tuple(blocks))


def default_space() -> SearchSpace:
    """Six-block student supernet with the 3/5/7 x 3/6 MBConv menu."""
    return SearchSpace.from_layers(DEFAULT_LAYERS, DEFAULT_CHANNELS, DEFAULT_IN_CHANNELS)


def enumerate_block_subnets(block: BlockSpec) -> list[SubnetId]:
    return [SubnetId(block.index, v) for v in range(block.num_subnets)]


def _check_id(block: BlockSpec, sid) -> int:
    value = int(sid.value if isinstance(sid, SubnetId) else sid)
    if isinstance(sid, SubnetId) and sid.block_index != block.index:
        raise SubnetRangeError(
            f"subnet id belongs to block {sid.block_index}, not block {block.index}")
    if not 0 <= value < block.num_subnets:
        raise SubnetRangeError(
            f"subnet {value} out of range for block {block.index} "
            f"(0..{block.num_subnets - 1})")
    return value


def decode_digits(block: BlockSpec, sid) -> list[int]:
    """Menu index of each layer's op, layer 0 first."""
    value = _check_id(block, sid)
    radix = len(block.op_menu)
    digits = []
    for _ in range(block.num_layers):
        value, d = divmod(value, radix)
        digits.append(d)
    return digits


def decode_subnet(block: BlockSpec, sid) -> list[OpChoice]:
    return [block.op_menu[d] for d in decode_digits(block, sid)]


def encode_subnet(block: BlockSpec, ops: Sequence[OpChoice]) -> SubnetId:
    if len(ops) != block.num_layers:
        raise ValidationError(
            f"block {block.index} has {block.num_layers} layers, got {len(ops)} ops")
    index = {op: i for i, op in enumerate(block.op_menu)}
    radix = len(block.op_menu)
    value = 0
    for k, op in enumerate(ops):
        op = op if isinstance(op, OpChoice) else OpChoice(*op)
        if op not in index:
            raise ValidationError(f"op {op} not in block {block.index} menu")
        value += index[op] * radix**k
    return SubnetId(block.index, value)


# -- config files -----------------------------------------------------------

def _menu_to_list(menu):
    return [[op.kernel_size, op.expansion] for op in menu]


def _menu_from_list(items) -> tuple[OpChoice, ...]:
    try:
        ops = [OpChoice(int(k), int(e)) for k, e in items]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed op menu {items!r}") from exc
    return tuple(sorted(ops))


def space_to_dict(space: SearchSpace) -> dict:
    return {
        "in_channels": space.blocks[0].in_channels,
        "blocks": [
            {"num_layers": b.num_layers, "channels": b.out_channels,
             "op_menu": _menu_to_list(b.op_menu)}
            for b in space.blocks
        ],
    }


def space_from_dict(cfg: dict) -> SearchSpace:
    """Build a space from its config mapping.

    Schema::

        {"in_channels": 24,                      # optional, default 24
         "op_menu": [[3, 3], [3, 6], ...],       # optional, default 3/5/7 x 3/6
         "blocks": [{"num_layers": 3, "channels": 24,
                     "op_menu": [...]},          # per-block override, optional
                    ...]}
    """
    if "blocks" not in cfg or not isinstance(cfg["blocks"], list):
        raise ValidationError("space config needs a 'blocks' list")
    default_menu = (_menu_from_list(cfg["op_menu"]) if "op_menu" in cfg
                    else default_op_menu())
    c_prev = int(cfg.get("in_channels", DEFAULT_IN_CHANNELS))
    blocks = []
    for i, b in enumerate(cfg["blocks"]):
        try:
            nl = int(b["num_layers"])
            ch = int(b["channels"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"block {i}: needs integer num_layers and channels") from exc
        menu = _menu_from_list(b["op_menu"]) if "op_menu" in b else default_menu
        blocks.append(BlockSpec(i, nl, c_prev, ch, menu))
        c_prev = ch
    return SearchSpace(tuple(blocks))


def space_hash(space: SearchSpace) -> str:
    blob = json.dumps(space_to_dict(space), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def load_space(path) -> SearchSpace:
    cfg = json.loads(Path(path).read_text())
    return space_from_dict(cfg.get("space", cfg))


def describe_space(space: SearchSpace) -> str:
    lines = [f"{'block':>5} {'L#':>3} {'in':>5} {'out':>5} {'ops':>4} {'subnets':>8}"]
    for b in space.blocks:
        lines.append(f"{b.index:>5} {b.num_layers:>3} {b.in_channels:>5} "
                     f"{b.out_channels:>5} {len(b.op_menu):>4} {b.num_subnets:>8}")
    lines.append(f"hash {space_hash(space)}")
    return "\n".join(lines)
