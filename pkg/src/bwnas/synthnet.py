"""Synthetic 1-D MBConv teacher/student blocks.

Each layer is expand (1x1) -> tanh -> depthwise 1-D conv (same padding) ->
tanh -> project (1x1).  Feature batches are ``(samples, channels, length)``
float64 arrays.  All weights come from ``numpy.random.SeedSequence`` streams
keyed by (role, seed, block, layer[, op]) so any subnet can be rebuilt
independently and subnets sharing a layer op share that layer's weights.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numba
import numpy as np

from .errors import ShapeError, ValidationError
from .nsr import channel_sq_errors, channel_variances, check_variances, nsr_loss
from .quant import quantize_activation, quantize_array
from .space import BlockSpec, OpChoice, SearchSpace, decode_digits

DEFAULT_SAMPLES = 20
DEFAULT_LENGTH = 16
DEFAULT_RIDGE = 1e-6
DEFAULT_TEACHER_OP = OpChoice(3, 6)

_TEACHER, _STUDENT, _CALIB = 1, 2, 3

Activation = Callable[[np.ndarray], np.ndarray] | None


def _rng(role: int, seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(role, *key)))


@dataclass(frozen=True)
class LayerWeights:
    expand: np.ndarray      # (e*c_in, c_in)
    depthwise: np.ndarray   # (e*c_in, k)
    project: np.ndarray     # (c_out, e*c_in)

    def tensors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.expand, self.depthwise, self.project

    @property
    def num_params(self) -> int:
        return sum(t.size for t in self.tensors())

    def quantized(self, bits: int) -> "LayerWeights":
        return LayerWeights(*(quantize_array(t, bits, axis=0) for t in self.tensors()))


@dataclass(frozen=True)
class BlockNet:
    block_index: int
    ops: tuple[OpChoice, ...]
    layers: tuple[LayerWeights, ...]

    @property
    def in_channels(self) -> int:
        return self.layers[0].expand.shape[1]

    @property
    def out_channels(self) -> int:
        return self.layers[-1].project.shape[0]

    def weight_tensors(self) -> list[np.ndarray]:
        return [t for layer in self.layers for t in layer.tensors()]

    def quantized(self, bits: int) -> "BlockNet":
        return replace(self, layers=tuple(l.quantized(bits) for l in self.layers))


@dataclass(frozen=True)
class TeacherNet:
    seed: int
    blocks: tuple[BlockNet, ...]


@dataclass(frozen=True)
class CalibrationSet:
    inputs: tuple[np.ndarray, ...]
    targets: tuple[np.ndarray, ...]
    seed: int

    @property
    def num_samples(self) -> int:
        return self.inputs[0].shape[0]

    def variances(self, block: int) -> np.ndarray:
        return channel_variances(self.targets[block])


def make_layer(rng: np.random.Generator, c_in: int, c_out: int, op: OpChoice) -> LayerWeights:
    hidden = op.expansion * c_in
    expand = rng.standard_normal((hidden, c_in)) / np.sqrt(c_in)
    depthwise = rng.standard_normal((hidden, op.kernel_size)) / np.sqrt(op.kernel_size)
    project = rng.standard_normal((c_out, hidden)) / np.sqrt(hidden)
    return LayerWeights(expand, depthwise, project)


def make_teacher_block(block: BlockSpec, seed: int, op: OpChoice = DEFAULT_TEACHER_OP) -> BlockNet:
    layers = tuple(
        make_layer(_rng(_TEACHER, seed, block.index, k), *block.layer_channels(k), op)
        for k in range(block.num_layers))
    return BlockNet(block.index, (op,) * block.num_layers, layers)


def make_teacher(space: SearchSpace, seed: int, op: OpChoice = DEFAULT_TEACHER_OP) -> TeacherNet:
    """Fixed-op teacher with the same block geometry as the student space."""
    return TeacherNet(int(seed), tuple(make_teacher_block(b, seed, op) for b in space.blocks))


def make_student_layer(block: BlockSpec, layer: int, op_index: int, seed: int) -> LayerWeights:
    rng = _rng(_STUDENT, seed, block.index, layer, op_index)
    return make_layer(rng, *block.layer_channels(layer), block.op_menu[op_index])


def make_student_block(block: BlockSpec, sid, seed: int) -> BlockNet:
    digits = decode_digits(block, sid)
    layers = tuple(make_student_layer(block, k, d, seed) for k, d in enumerate(digits))
    return BlockNet(block.index, tuple(block.op_menu[d] for d in digits), layers)


# -- forward -----------------------------------------------------------------

@numba.njit(cache=True)
def _depthwise(h, kernel):
    samples, channels, length = h.shape
    k = kernel.shape[1]
    left = (k - 1) // 2
    out = np.empty_like(h)
    for m in range(samples):
        for c in range(channels):
            for pos in range(length):
                acc = 0.0
                for j in range(k):
                    src = pos + j - left
                    if 0 <= src < length:
                        acc += kernel[c, j] * h[m, c, src]
                out[m, c, pos] = acc
    return out


def depthwise_conv(h: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-padded per-channel 1-D cross-correlation; ``kernel`` is (channels, k)."""
    h = np.ascontiguousarray(h, dtype=np.float64)
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    if kernel.shape[0] != h.shape[1]:
        raise ShapeError(f"depthwise kernel has {kernel.shape[0]} channels, input {h.shape[1]}")
    return _depthwise(h, kernel)


def layer_hidden(layer: LayerWeights, x: np.ndarray, activation: Activation = np.tanh) -> np.ndarray:
    """Features entering the projection of ``layer``."""
    h = layer.expand @ x
    if activation is not None:
        h = activation(h)
    h = depthwise_conv(h, layer.depthwise)
    if activation is not None:
        h = activation(h)
    return h


def project(weights: np.ndarray, h: np.ndarray) -> np.ndarray:
    return weights @ h


def forward_block(net: BlockNet, x, activation: Activation = np.tanh,
                  act_bits: int | None = None) -> np.ndarray:
    """Run a block on ``x``.

    ``act_bits`` fake-quantizes the block input and every layer output per
    tensor; ``activation=None`` makes the block linear.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != net.in_channels:
        raise ShapeError(
            f"block {net.block_index} expects {net.in_channels} input channels, got shape {x.shape}")
    if act_bits is not None:
        x = quantize_activation(x, act_bits)
    for layer in net.layers:
        x = project(layer.project, layer_hidden(layer, x, activation))
        if act_bits is not None:
            x = quantize_activation(x, act_bits)
    return x


def final_hidden(net: BlockNet, x, activation: Activation = np.tanh,
                 act_bits: int | None = None) -> np.ndarray:
    """Input to the last projection (the features a distillation fit acts on)."""
    x = np.asarray(x, dtype=np.float64)
    if act_bits is not None:
        x = quantize_activation(x, act_bits)
    for layer in net.layers[:-1]:
        x = project(layer.project, layer_hidden(layer, x, activation))
        if act_bits is not None:
            x = quantize_activation(x, act_bits)
    return layer_hidden(net.layers[-1], x, activation)


def make_calibration_set(space: SearchSpace, teacher: TeacherNet, seed: int,
                         samples: int = DEFAULT_SAMPLES,
                         length: int = DEFAULT_LENGTH) -> CalibrationSet:
    """Block ``i`` sees the teacher's block ``i-1`` output and is supervised by
    the teacher's block ``i`` output."""
    if samples < 1 or length < 1:
        raise ValidationError("samples and length must be >= 1")
    rng = _rng(_CALIB, seed)
    x = rng.standard_normal((samples, space.blocks[0].in_channels, length))
    inputs, targets = [], []
    for net in teacher.blocks:
        y = forward_block(net, x)
        inputs.append(x)
        targets.append(y)
        x = y
    return CalibrationSet(tuple(inputs), tuple(targets), int(seed))


# -- distillation fit ------------------------------------------------------

def solve_projection(hidden: np.ndarray, target: np.ndarray, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Ridge least-squares projection mapping ``hidden`` features to ``target``.

    Output channels decouple, so weighting channel ``c`` by ``1/var_c`` leaves
    each row's minimizer unchanged; the penalty is ``ridge * |row|^2``.
    """
    H = np.moveaxis(hidden, 1, 0).reshape(hidden.shape[1], -1)
    Y = np.moveaxis(target, 1, 0).reshape(target.shape[1], -1)
    gram = H @ H.T
    if ridge > 0:
        gram[np.diag_indices_from(gram)] += ridge
    try:
        return np.linalg.solve(gram, H @ Y.T).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "singular normal matrix in projection fit; use ridge > 0") from exc


def fit_last_projection(current: np.ndarray, hidden: np.ndarray, target: np.ndarray,
                        variances: np.ndarray, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Ridge-fitted projection, or ``current`` when the fit does not lower the NSR."""
    fitted = solve_projection(hidden, target, ridge)
    old = np.mean(channel_sq_errors(target, project(current, hidden)) / variances)
    new = np.mean(channel_sq_errors(target, project(fitted, hidden)) / variances)
    return fitted if new <= old else current


def fit_projection(net: BlockNet, x, target, ridge: float = DEFAULT_RIDGE) -> BlockNet:
    """Replace the last project matrix by its ridge fit to ``target``.

    The original matrix is kept when the fit does not lower the NSR (the
    ridge term can cost a few ulps when the current weights are already
    optimal), so the calibration NSR never increases.
    """
    target = np.asarray(target, dtype=np.float64)
    h = final_hidden(net, x)
    if h.shape[0] != target.shape[0] or h.shape[2] != target.shape[2] \
            or target.shape[1] != net.out_channels:
        raise ShapeError(f"hidden {h.shape} incompatible with target {target.shape}")
    var = channel_variances(target)
    check_variances(var)
    current = net.layers[-1].project
    chosen = fit_last_projection(current, h, target, var, ridge)
    if chosen is current:
        return net
    last = replace(net.layers[-1], project=chosen)
    return replace(net, layers=net.layers[:-1] + (last,))


def evaluate_block(net: BlockNet, x, target, bits: int | None = None,
                   act_bits: int | None = None) -> float:
    """NSR of ``net`` (optionally weight-quantized) on one calibration pair."""
    if bits is not None:
        net = net.quantized(bits)
    return nsr_loss(target, forward_block(net, x, act_bits=act_bits))


# -- golden-file export ----------------------------------------------------

_MAGIC = b"BWCAL\x00\x01\x00"


def export_batches(path, batches: Sequence[np.ndarray]) -> None:
    """Flat binary dump: magic, uint64 count, then per batch uint64 dims
    (samples, channels, length) followed by little-endian float64 data."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint64(len(batches)).astype("<u8").tobytes())
        for b in batches:
            b = np.asarray(b, dtype=np.float64)
            fh.write(np.asarray(b.shape, dtype="<u8").tobytes())
            fh.write(np.ascontiguousarray(b).astype("<f8").tobytes())


def import_batches(path) -> list[np.ndarray]:
    raw = open(path, "rb").read()
    if raw[:8] != _MAGIC:
        raise ValidationError(f"{path}: not a calibration batch file")
    pos = 8
    (count,) = np.frombuffer(raw, "<u8", 1, pos)
    pos += 8
    out = []
    for _ in range(int(count)):
        dims = np.frombuffer(raw, "<u8", 3, pos).astype(int)
        pos += 24
        n = int(np.prod(dims))
        out.append(np.frombuffer(raw, "<f8", n, pos).reshape(dims).copy())
        pos += 8 * n
    return out
