"""Pareto pruning of LUTs over (loss, size[, latency])."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import IncompatibleError, ValidationError
from .lut import BlockLut, LutEntry, manifest_digest, read_luts, write_luts

METRICS = ("size", "latency")


def parse_metrics(metrics) -> tuple[str, ...]:
    """Normalize ``"size,latency"`` / iterables to canonical order."""
    if isinstance(metrics, str):
        metrics = [m for m in metrics.split(",") if m.strip()]
    names = {m.strip().lower() for m in metrics}
    unknown = names - set(METRICS)
    if unknown:
        raise ValidationError(f"unknown metrics {sorted(unknown)}; choose from {METRICS}")
    if not names:
        raise ValidationError("metric set is empty")
    return tuple(m for m in METRICS if m in names)


def metric_value(entry: LutEntry, metric: str):
    return entry.size_bits if metric == "size" else entry.latency_us


def _objectives(entries: Sequence[LutEntry], metrics: tuple[str, ...]) -> np.ndarray:
    cols = [[e.loss for e in entries]]
    for m in metrics:
        col = [metric_value(e, m) for e in entries]
        if any(v is None for v in col):
            bad = next(e for e, v in zip(entries, col) if v is None)
            raise ValidationError(f"subnet {bad.subnet_id} (w{bad.bitwidth}) has no {m} value")
        cols.append(col)
    return np.array(cols, dtype=np.float64).T.reshape(len(entries), len(cols))


def front_order(e: LutEntry):
    return (e.loss, e.size_bits, e.subnet_id, e.bitwidth)


def _mask_2d(points: np.ndarray) -> np.ndarray:
    order = np.lexsort(points.T[::-1])
    a, b = points[order, 0], points[order, 1]
    # first row of each equal-a group holds the group's smallest b
    start = np.searchsorted(a, a, side="left")
    prefix = np.minimum.accumulate(b)
    before = np.where(start > 0, prefix[np.maximum(start - 1, 0)], np.inf)
    dominated = (before <= b) | (b[start] < b)
    keep = np.empty(len(points), dtype=bool)
    keep[order] = ~dominated
    return keep


def nondominated_mask(points: np.ndarray) -> np.ndarray:
    """Mask of rows not dominated by any other row (minimization, ties kept).

    Rows are visited in lexicographic order, so every potential dominator of
    a row precedes it and only the retained set has to be checked.
    """
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    if n == 0:
        return np.zeros(0, dtype=bool)
    if d == 2:
        return _mask_2d(points)
    order = np.lexsort(points.T[::-1])
    keep = np.zeros(n, dtype=bool)
    front = np.empty((n, d))
    size = 0
    for i in order:
        p = points[i]
        f = front[:size]
        if size and np.any(np.all(f <= p, axis=1) & np.any(f < p, axis=1)):
            continue
        keep[i] = True
        front[size] = p
        size += 1
    return keep


@dataclass(frozen=True)
class ParetoFront:
    block: int
    bitwidth: int
    metrics: tuple[str, ...]
    entries: tuple[LutEntry, ...]
    merged: bool = False

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(sorted(self.entries, key=front_order)))

    def __len__(self):
        return len(self.entries)

    @property
    def source(self) -> tuple[int, int]:
        return self.block, self.bitwidth

    def as_lut(self) -> BlockLut:
        return BlockLut(self.block, self.bitwidth,
                        tuple(sorted(self.entries, key=lambda e: e.subnet_id)))


def pareto_front(entries: Sequence[LutEntry], metrics, block: int = -1,
                 bitwidth: int | None = None) -> ParetoFront:
    """Non-dominated subset of ``entries`` over loss and the active ``metrics``."""
    metrics = parse_metrics(metrics)
    entries = list(entries)
    if bitwidth is None:
        bitwidth = entries[0].bitwidth if entries else -1
    if not entries:
        return ParetoFront(block, bitwidth, metrics, ())
    keep = nondominated_mask(_objectives(entries, metrics))
    return ParetoFront(block, bitwidth, metrics, tuple(e for e, k in zip(entries, keep) if k))


def prune_luts(luts: Iterable[BlockLut | ParetoFront], metrics,
               merge_bitwidths: bool = False) -> list[ParetoFront]:
    """One front per input LUT.

    With ``merge_bitwidths`` dominance is also applied across the bitwidths of
    a block; the result is still split into per-bitwidth fronts (some possibly
    empty) and flagged ``merged``.
    """
    metrics = parse_metrics(metrics)
    luts = list(luts)
    if not merge_bitwidths:
        return [pareto_front(l.entries, metrics, l.block, l.bitwidth) for l in luts]
    fronts = []
    for block in sorted({l.block for l in luts}):
        group = [l for l in luts if l.block == block]
        pool = [e for l in group for e in l.entries]
        kept = pareto_front(pool, metrics, block).entries
        for l in group:
            fronts.append(ParetoFront(block, l.bitwidth, metrics,
                                      tuple(e for e in kept if e.bitwidth == l.bitwidth),
                                      merged=True))
    return fronts


def write_fronts(fronts: Sequence[ParetoFront], manifest: dict, directory,
                 source_dir=None) -> Path:
    """Persist fronts in the LUT CSV format with the metric set in the manifest."""
    if not fronts:
        raise ValidationError("no fronts to write")
    metrics = {f.metrics for f in fronts}
    if len(metrics) != 1:
        raise ValidationError("fronts were pruned with different metric sets")
    m = dict(manifest)
    m["kind"] = "fronts"
    m["metrics"] = list(fronts[0].metrics)
    m["merged"] = any(f.merged for f in fronts)
    if source_dir is not None:
        m["source_manifest_sha256"] = manifest_digest(source_dir)
    return write_luts([f.as_lut() for f in fronts], m, directory)


def read_fronts(directory, space=None, expected_hash: str | None = None) -> tuple[list[ParetoFront], dict]:
    luts, manifest = read_luts(directory, space, expected_hash)
    if manifest.get("kind") != "fronts":
        raise IncompatibleError(f"{directory} holds {manifest.get('kind')!r}, not fronts")
    metrics = parse_metrics(manifest["metrics"])
    merged = bool(manifest.get("merged", False))
    fronts = [ParetoFront(l.block, l.bitwidth, metrics, l.entries, merged) for l in luts]
    return fronts, manifest
