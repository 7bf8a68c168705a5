"""Min-max fake quantization (symmetric, signed, zero-point free).

Weights are quantized per output channel, activations per tensor.  For a
channel with extrema (lo, hi) and ``b`` bits::

    qmax  = 2**(b - 1) - 1
    scale = max(|lo|, |hi|) / qmax
    q(x)  = scale * clamp(round(x / scale), -qmax, qmax)

with rounding half away from zero.  An all-zero channel has scale 0 and
quantizes to zeros.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeError, ValidationError

MIN_BITS = 2
MAX_BITS = 8


@dataclass(frozen=True)
class WeightTensor:
    data: np.ndarray
    channel_axis: int = 0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        object.__setattr__(self, "data", arr)
        if not 0 <= self.channel_axis < arr.ndim:
            raise ShapeError(f"channel_axis {self.channel_axis} invalid for rank {arr.ndim}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def num_channels(self) -> int:
        return self.data.shape[self.channel_axis]

    def __neg__(self):
        return WeightTensor(-self.data, self.channel_axis)


@dataclass(frozen=True)
class QuantScheme:
    bits: int
    per_channel: bool = True

    def __post_init__(self):
        if not isinstance(self.bits, (int, np.integer)) or not MIN_BITS <= self.bits <= MAX_BITS:
            raise ValidationError(f"bits must be an integer in [{MIN_BITS}, {MAX_BITS}], got {self.bits!r}")

    @property
    def qmax(self) -> int:
        return 2 ** (self.bits - 1) - 1

    @property
    def name(self) -> str:
        return f"w{self.bits}"

    @classmethod
    def parse(cls, text: str) -> "QuantScheme":
        """Parse a CLI scheme name such as ``w4`` or ``8``."""
        t = text.strip().lower()
        if t.startswith("w"):
            t = t[1:]
        try:
            return cls(int(t))
        except ValueError as exc:
            raise ValidationError(f"cannot parse quantization scheme {text!r}") from exc


@dataclass(frozen=True)
class QuantMenu:
    bitwidths: tuple[int, ...] = (4, 6, 8)

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bitwidths)
        object.__setattr__(self, "bitwidths", bits)
        if not bits:
            raise ValidationError("quant menu is empty")
        if list(bits) != sorted(set(bits)):
            raise ValidationError(f"bitwidths must be distinct and ascending, got {bits}")
        for b in bits:
            QuantScheme(b)

    def __len__(self):
        return len(self.bitwidths)

    def __iter__(self):
        return iter(self.bitwidths)

    def schemes(self) -> list[QuantScheme]:
        return [QuantScheme(b) for b in self.bitwidths]


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def _channels_first(data: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(data, axis, 0).reshape(data.shape[axis], -1)


def channel_minmax(t: WeightTensor) -> list[tuple[float, float]]:
    flat = _channels_first(t.data, t.channel_axis)
    if flat.size == 0 or flat.shape[1] == 0:
        raise ShapeError("channel_minmax needs non-empty channels")
    return [(float(lo), float(hi)) for lo, hi in zip(flat.min(axis=1), flat.max(axis=1))]


def channel_scales(data: np.ndarray, bits: int, axis: int | None = 0) -> np.ndarray:
    """Per-channel scales along ``axis`` (``None`` for a single per-tensor scale)."""
    qmax = 2 ** (bits - 1) - 1
    if axis is None:
        return np.asarray(np.max(np.abs(data)) / qmax)
    flat = _channels_first(data, axis)
    return np.max(np.abs(flat), axis=1) / qmax


def quantize_array(data: np.ndarray, bits: int, axis: int | None = 0) -> np.ndarray:
    """Array-level kernel behind :func:`fake_quantize`."""
    QuantScheme(bits)
    qmax = 2 ** (bits - 1) - 1
    data = np.asarray(data, dtype=np.float64)
    scale = channel_scales(data, bits, axis)
    if axis is not None:
        shape = [1] * data.ndim
        shape[axis] = -1
        scale = scale.reshape(shape)
    safe = np.where(scale > 0, scale, 1.0)
    n = np.clip(round_half_away(data / safe), -qmax, qmax)
    return np.where(scale > 0, n * scale, 0.0)


def fake_quantize(t: WeightTensor, s: QuantScheme) -> WeightTensor:
    axis = t.channel_axis if s.per_channel else None
    return WeightTensor(quantize_array(t.data, s.bits, axis), t.channel_axis)


def quantize_block_weights(weights: Sequence[WeightTensor], s: QuantScheme) -> list[WeightTensor]:
    return [fake_quantize(w, s) for w in weights]


def quantize_activation(x: np.ndarray, bits: int = 8) -> np.ndarray:
    """Per-tensor fake quantization used for activations."""
    return quantize_array(x, bits, axis=None)
