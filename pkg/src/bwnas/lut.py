"""Per-(block, bitwidth) lookup tables of quantized NSR loss and HW cost.

LUT population walks each block's subnets as a prefix tree over layers:
layer ``k`` activations depend only on the ops of layers ``0..k``, and
subnets sharing a layer op share its weights, so every prefix is evaluated
once per bitwidth.  The numbers are bit-identical to evaluating each subnet
from scratch with :func:`bwnas.synthnet.evaluate_block`.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .errors import IncompatibleError, LutFormatError, MissingMeasurementError, ValidationError
from .nsr import channel_sq_errors, channel_variances, check_variances
from .quant import QuantMenu, quantize_activation, quantize_array
from .space import BlockSpec, SearchSpace, decode_digits, space_from_dict, space_hash
from .synthnet import (
    DEFAULT_RIDGE,
    CalibrationSet,
    TeacherNet,
    fit_last_projection,
    layer_hidden,
    make_student_layer,
    project,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
CSV_HEADER = ["subnet_id", "loss", "size_bits", "latency_us"]


@dataclass(frozen=True)
class LutEntry:
    subnet_id: int
    bitwidth: int
    loss: float
    size_bits: int
    latency_us: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.loss) and self.loss >= 0):
            raise ValidationError(f"subnet {self.subnet_id}: loss must be finite and >= 0, got {self.loss}")
        if self.size_bits < 0:
            raise ValidationError(f"subnet {self.subnet_id}: negative size")
        if self.latency_us is not None and not self.latency_us >= 0:
            raise ValidationError(f"subnet {self.subnet_id}: negative latency")


@dataclass(frozen=True)
class BlockLut:
    block: int
    bitwidth: int
    entries: tuple[LutEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self):
        return len(self.entries)

    @property
    def has_latency(self) -> bool:
        return bool(self.entries) and all(e.latency_us is not None for e in self.entries)

    @property
    def filename(self) -> str:
        return lut_filename(self.block, self.bitwidth)


def lut_filename(block: int, bits: int) -> str:
    return f"lut_b{block}_w{bits}.csv"


# -- hardware metrics ------------------------------------------------------

def layer_param_count(block: BlockSpec, layer: int, op) -> int:
    c_in, c_out = block.layer_channels(layer)
    hidden = op.expansion * c_in
    return hidden * c_in + hidden * op.kernel_size + c_out * hidden


def layer_macs(block: BlockSpec, layer: int, op, length: int) -> int:
    """Multiply-accumulates of one layer for one sample of ``length`` positions."""
    return layer_param_count(block, layer, op) * length


def param_count(block: BlockSpec, sid) -> int:
    return sum(layer_param_count(block, k, block.op_menu[d])
               for k, d in enumerate(decode_digits(block, sid)))


def model_size_bits(block: BlockSpec, sid, bits: int) -> int:
    """Weight-only model size: parameter count times bitwidth."""
    return param_count(block, sid) * int(bits)


class LatencyModel:
    def latency(self, block: BlockSpec, sid) -> float:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class SyntheticLatency(LatencyModel):
    """``alpha * MACs + beta`` per layer, MACs counted at ``length`` positions."""

    alpha_us_per_mac: float = 1e-4
    beta_us: float = 2.0
    length: int = 16

    def __post_init__(self):
        if self.alpha_us_per_mac < 0 or self.beta_us < 0 or self.length < 1:
            raise ValidationError("synthetic latency needs alpha >= 0, beta >= 0, length >= 1")

    def latency(self, block: BlockSpec, sid) -> float:
        total = 0.0
        for k, d in enumerate(decode_digits(block, sid)):
            total += self.alpha_us_per_mac * layer_macs(block, k, block.op_menu[d], self.length) + self.beta_us
        return total

    def describe(self) -> dict:
        return {"kind": "synthetic", "alpha_us_per_mac": self.alpha_us_per_mac,
                "beta_us": self.beta_us, "length": self.length}


@dataclass(frozen=True)
class TableLatency(LatencyModel):
    """Measured latencies keyed by (block, subnet_id)."""

    table: dict = field(default_factory=dict)
    source: str = ""

    def latency(self, block: BlockSpec, sid) -> float:
        key = (block.index, int(getattr(sid, "value", sid)))
        try:
            return self.table[key]
        except KeyError:
            raise MissingMeasurementError(*key) from None

    def describe(self) -> dict:
        digest = hashlib.sha256(repr(sorted(self.table.items())).encode()).hexdigest()
        return {"kind": "table", "source": self.source, "rows": len(self.table), "sha256": digest}

    @classmethod
    def from_csv(cls, path) -> "TableLatency":
        """Read a ``block,subnet_id,latency_us`` CSV."""
        table = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["block", "subnet_id", "latency_us"]:
                raise LutFormatError(path, 1, f"expected header block,subnet_id,latency_us, got {header}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    b, s, v = int(row[0]), int(row[1]), float(row[2])
                except (IndexError, ValueError):
                    raise LutFormatError(path, lineno, f"malformed row {row}") from None
                if not v >= 0:
                    raise LutFormatError(path, lineno, "negative latency")
                table[(b, s)] = v
        return cls(table, str(path))


def latency_estimate(block: BlockSpec, sid, model: LatencyModel) -> float:
    return model.latency(block, sid)


# -- population --------------------------------------------------------------

def _maybe_act(x: np.ndarray, act_bits: int | None) -> np.ndarray:
    return x if act_bits is None else quantize_activation(x, act_bits)


def evaluate_block_losses(block: BlockSpec, x: np.ndarray, target: np.ndarray,
                          bitwidths: Sequence[int], seed: int, fit: bool = False,
                          ridge: float = DEFAULT_RIDGE, act_bits: int | None = 8) -> dict[int, np.ndarray]:
    """Quantized NSR of every subnet of ``block`` at every bitwidth.

    Returns ``{bits: losses}`` with ``losses[subnet_id]``.
    """
    radix = len(block.op_menu)
    n_layers = block.num_layers
    var = channel_variances(target)
    check_variances(var)
    losses = {b: np.empty(block.num_subnets) for b in bitwidths}

    fp_layers: dict = {}
    q_layers: dict = {}

    def weights(k, d):
        if (k, d) not in fp_layers:
            fp_layers[k, d] = make_student_layer(block, k, d, seed)
        return fp_layers[k, d]

    def qweights(k, d, b):
        if (k, d, b) not in q_layers:
            q_layers[k, d, b] = weights(k, d).quantized(b)
        return q_layers[k, d, b]

    def visit(k, value, x_fp, x_q):
        for d in range(radix):
            v = value + d * radix**k
            w = weights(k, d)
            if k < n_layers - 1:
                nxt_fp = project(w.project, layer_hidden(w, x_fp)) if fit else None
                nxt_q = {}
                for b in bitwidths:
                    wq = qweights(k, d, b)
                    nxt_q[b] = _maybe_act(project(wq.project, layer_hidden(wq, x_q[b])), act_bits)
                visit(k + 1, v, nxt_fp, nxt_q)
                continue
            proj = w.project
            if fit:
                proj = fit_last_projection(proj, layer_hidden(w, x_fp), target, var, ridge)
            for b in bitwidths:
                wq = qweights(k, d, b)
                pq = wq.project if proj is w.project else quantize_array(proj, b, axis=0)
                out = _maybe_act(project(pq, layer_hidden(wq, x_q[b])), act_bits)
                losses[b][v] = np.mean(channel_sq_errors(target, out) / var)

    x = np.asarray(x, dtype=np.float64)
    x0 = _maybe_act(x, act_bits)
    visit(0, 0, x if fit else None, {b: x0 for b in bitwidths})
    return losses


@dataclass(frozen=True)
class LutOptions:
    fit: bool = False
    ridge: float = DEFAULT_RIDGE
    act_bits: int | None = 8
    latency: LatencyModel | None = None
    latency_all_bits: bool = False
    student_seed: int = 1
    workers: int = 1


def _block_job(args):
    block, x, target, bits, opts = args
    return evaluate_block_losses(block, x, target, bits, opts.student_seed,
                                 opts.fit, opts.ridge, opts.act_bits)


def build_luts(space: SearchSpace, teacher: TeacherNet, menu: QuantMenu,
               calib: CalibrationSet, options: LutOptions | None = None) -> list[BlockLut]:
    """Populate all ``N x B`` LUTs, ordered by (block, bitwidth)."""
    opts = options or LutOptions()
    if len(calib.inputs) != space.num_blocks or len(teacher.blocks) != space.num_blocks:
        raise ValidationError("teacher / calibration set do not match the space")
    bits = list(menu.bitwidths)
    jobs = [(b, calib.inputs[b.index], calib.targets[b.index], bits, opts) for b in space.blocks]
    if opts.workers > 1:
        with ProcessPoolExecutor(max_workers=opts.workers) as pool:
            per_block = list(pool.map(_block_job, jobs))
    else:
        per_block = [_block_job(j) for j in jobs]

    latest = max(bits)
    luts = []
    for block, losses in zip(space.blocks, per_block):
        params = [param_count(block, v) for v in range(block.num_subnets)]
        lat = None
        if opts.latency is not None:
            lat = [opts.latency.latency(block, v) for v in range(block.num_subnets)]
        for b in bits:
            with_lat = lat is not None and (opts.latency_all_bits or b == latest)
            entries = tuple(
                LutEntry(v, b, float(losses[b][v]), params[v] * b,
                         lat[v] if with_lat else None)
                for v in range(block.num_subnets))
            luts.append(BlockLut(block.index, b, entries))
        log.info("block %d: %d subnets x %d bitwidths", block.index, block.num_subnets, len(bits))
    return luts


# -- persistence ------------------------------------------------------------

def format_float(x: float) -> str:
    return format(x, ".17g")


def lut_to_csv(lut: BlockLut) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for e in sorted(lut.entries, key=lambda e: e.subnet_id):
        w.writerow([e.subnet_id, format_float(e.loss), e.size_bits,
                    "" if e.latency_us is None else format_float(e.latency_us)])
    return buf.getvalue()


def parse_lut_csv(text: str, block: int, bits: int, path="<lut>") -> BlockLut:
    rows = text.splitlines()
    if not rows or rows[0].split(",") != CSV_HEADER:
        raise LutFormatError(path, 1, f"expected header {','.join(CSV_HEADER)}")
    entries = []
    prev = -1
    for lineno, row in enumerate(csv.reader(rows[1:]), start=2):
        if len(row) != 4:
            raise LutFormatError(path, lineno, f"expected 4 fields, got {len(row)}")
        try:
            sid, loss, size = int(row[0]), float(row[1]), int(row[2])
            lat = float(row[3]) if row[3] != "" else None
            entry = LutEntry(sid, bits, loss, size, lat)
        except (ValueError, ValidationError) as exc:
            raise LutFormatError(path, lineno, str(exc)) from None
        if sid <= prev:
            raise LutFormatError(path, lineno, "subnet ids must be strictly ascending")
        prev = sid
        entries.append(entry)
    return BlockLut(block, bits, tuple(entries))


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def make_manifest(space: SearchSpace, bitwidths: Iterable[int], kind: str = "luts", **fields) -> dict:
    m = {
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "kind": kind,
        "space_hash": space_hash(space),
        "space": space.to_dict(),
        "bits": [int(b) for b in bitwidths],
    }
    m.update(fields)
    return m


def write_luts(luts: Sequence[BlockLut], manifest: dict, directory) -> Path:
    """Write one CSV per LUT plus ``manifest.json`` (with per-file digests).

    Returns the manifest path.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for lut in luts:
        blob = lut_to_csv(lut).encode()
        (out / lut.filename).write_bytes(blob)
        files[lut.filename] = _sha256(blob)
    m = dict(manifest)
    m["files"] = dict(sorted(files.items()))
    path = out / MANIFEST
    path.write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    if not path.is_file():
        raise LutFormatError(path, None, "missing manifest")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise LutFormatError(path, exc.lineno, f"invalid manifest JSON: {exc.msg}") from None


def manifest_digest(directory) -> str:
    return _sha256((Path(directory) / MANIFEST).read_bytes())


def check_space(manifest: dict, space: SearchSpace | None = None,
                expected_hash: str | None = None) -> SearchSpace:
    """Validate the manifest's space hash; returns the embedded space."""
    if manifest.get("format_version") != FORMAT_VERSION:
        raise IncompatibleError(f"unsupported format version {manifest.get('format_version')}")
    embedded = space_from_dict(manifest["space"])
    if space_hash(embedded) != manifest.get("space_hash"):
        raise IncompatibleError("manifest space hash does not match its embedded space config")
    want = expected_hash or (space_hash(space) if space is not None else None)
    if want is not None and want != manifest["space_hash"]:
        raise IncompatibleError(
            f"artifacts were built for space {manifest['space_hash'][:12]}, "
            f"expected {want[:12]}")
    return embedded


def read_luts(directory, space: SearchSpace | None = None,
              expected_hash: str | None = None) -> tuple[list[BlockLut], dict]:
    d = Path(directory)
    manifest = read_manifest(d)
    embedded = check_space(manifest, space, expected_hash)
    complete = manifest.get("kind", "luts") == "luts"
    luts = []
    for name, digest in manifest.get("files", {}).items():
        path = d / name
        if not path.is_file():
            raise LutFormatError(path, None, "listed in manifest but missing")
        blob = path.read_bytes()
        if _sha256(blob) != digest:
            raise IncompatibleError(f"{path}: content does not match manifest digest")
        try:
            stem = name[len("lut_b"):-len(".csv")]
            block, bits = (int(p) for p in stem.split("_w"))
        except ValueError:
            raise LutFormatError(path, None, "unexpected LUT file name") from None
        lut = parse_lut_csv(blob.decode(), block, bits, path)
        if block >= embedded.num_blocks:
            raise IncompatibleError(f"{path}: block {block} not in space")
        n = embedded.blocks[block].num_subnets
        ids = [e.subnet_id for e in lut.entries]
        if complete and ids != list(range(n)):
            raise LutFormatError(path, None, f"expected subnets 0..{n - 1}")
        if ids and ids[-1] >= n:
            raise LutFormatError(path, None, f"subnet id {ids[-1]} out of range")
        luts.append(lut)
    luts.sort(key=lambda l: (l.block, l.bitwidth))
    return luts, manifest
