"""Randomized self-checks: branch and bound vs brute force, pruned vs full."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InfeasibleError
from .lut import BlockLut
from .pareto import prune_luts
from .search import (
    SearchConstraints,
    branch_and_bound_search,
    brute_force_search,
    concat_block_candidates,
)


@dataclass
class TrialReport:
    trial: int
    blocks: list[int]
    combinations: int
    constraints: SearchConstraints
    exact: bool
    pruning_safe: bool
    objective: float | None
    t_brute: float
    t_bnb: float
    t_pruned: float

    @property
    def passed(self) -> bool:
        return self.exact and self.pruning_safe

    @property
    def speedup(self) -> float:
        return self.t_brute / max(self.t_pruned, 1e-9)


def _outcome(fn, *args):
    t0 = time.perf_counter()
    try:
        r = fn(*args)
        return r, time.perf_counter() - t0
    except InfeasibleError:
        return None, time.perf_counter() - t0


def _same(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.objective == b.objective and a.selection == b.selection


def random_sub_instance(luts: Sequence[BlockLut], rng: np.random.Generator,
                        max_blocks: int = 4, max_combinations: int = 5_000_000) -> tuple[list[BlockLut], list[int]]:
    """Random subset of blocks, each LUT subsampled so brute force stays tractable.

    Blocks are renumbered 0..k-1.
    """
    blocks = sorted({l.block for l in luts})
    k = int(rng.integers(1, min(max_blocks, len(blocks)) + 1))
    chosen = sorted(rng.choice(blocks, size=k, replace=False).tolist())
    per_block = max(1, int(max_combinations ** (1.0 / k)))
    out = []
    for new, b in enumerate(chosen):
        group = [l for l in luts if l.block == b]
        quota = max(1, per_block // len(group))
        for l in group:
            idx = np.sort(rng.choice(len(l.entries), size=min(quota, len(l.entries)), replace=False))
            out.append(BlockLut(new, l.bitwidth, tuple(l.entries[i] for i in idx)))
    return out, chosen


def random_constraints(luts: Sequence[BlockLut], rng: np.random.Generator) -> SearchConstraints:
    cands = concat_block_candidates(luts)
    lo = sum(min(e.size_bits for e in b) for b in cands.blocks)
    hi = sum(max(e.size_bits for e in b) for b in cands.blocks)
    size = int(lo + rng.uniform(-0.05, 1.0) * (hi - lo))
    lat = None
    if all(l.has_latency for l in luts) and rng.random() < 0.5:
        tlo = sum(min(e.latency_us for e in b) for b in cands.blocks)
        thi = sum(max(e.latency_us for e in b) for b in cands.blocks)
        lat = float(tlo + rng.uniform(0.0, 1.0) * (thi - tlo))
    return SearchConstraints(size, lat)


def run_trials(luts: Sequence[BlockLut], trials: int, seed: int,
               max_blocks: int = 4, max_combinations: int = 5_000_000) -> list[TrialReport]:
    rng = np.random.default_rng(seed)
    reports = []
    for t in range(trials):
        sub, chosen = random_sub_instance(luts, rng, max_blocks, max_combinations)
        cons = random_constraints(sub, rng)
        metrics = cons.active_metrics or ("size",)
        brute, tb = _outcome(brute_force_search, sub, cons)
        bnb, tn = _outcome(branch_and_bound_search, sub, cons)
        t0 = time.perf_counter()
        fronts = prune_luts(sub, metrics)
        pruned, _ = _outcome(branch_and_bound_search, fronts, cons)
        tp = time.perf_counter() - t0
        safe = (pruned is None and bnb is None) or (
            pruned is not None and bnb is not None and pruned.objective == bnb.objective)
        reports.append(TrialReport(
            t, chosen, math.prod(concat_block_candidates(sub).sizes), cons,
            _same(brute, bnb), safe, None if bnb is None else bnb.objective, tb, tn, tp))
    return reports


def format_reports(reports: Sequence[TrialReport]) -> str:
    lines = []
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        obj = "infeasible" if r.objective is None else f"{r.objective:.6g}"
        lines.append(
            f"[{status}] trial {r.trial:3d} blocks={r.blocks} combos={r.combinations:>10d} "
            f"objective={obj} brute={r.t_brute * 1e3:8.1f}ms bnb={r.t_bnb * 1e3:7.2f}ms "
            f"pruned={r.t_pruned * 1e3:7.2f}ms speedup={r.speedup:8.1f}x")
    n_pass = sum(r.passed for r in reports)
    lines.append(f"{n_pass}/{len(reports)} trials passed")
    return "\n".join(lines)
