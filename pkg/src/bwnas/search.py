"""Exact constrained search over per-block (subnet, bitwidth) candidates.

The problem has multiple-choice knapsack shape: pick one candidate per block,
minimize the summed loss subject to additive size / latency budgets.

Canonical semantics shared by every search routine here:

* per-block candidates are ordered by (loss, size, latency, bitwidth, subnet);
* totals are left folds in block order, so every routine produces the same
  floating-point sums;
* among selections with equal total loss the lexicographically smallest
  tuple of per-block candidate ranks wins.
"""

from __future__ import annotations

import itertools
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import IncompatibleError, InfeasibleError, OracleCapError, ValidationError
from .lut import BlockLut, LutEntry
from .pareto import ParetoFront

BRUTE_FORCE_CAP = 200_000_000
_INNER_CHUNK = 1 << 21


def candidate_key(e: LutEntry):
    lat = math.inf if e.latency_us is None else e.latency_us
    return (e.loss, e.size_bits, lat, e.bitwidth, e.subnet_id)


@dataclass(frozen=True)
class SearchConstraints:
    max_total_size_bits: int | None = None
    max_total_latency_us: float | None = None
    bitwidths: tuple[int, ...] | None = None
    base_size_bits: int = 0

    def __post_init__(self):
        if self.bitwidths is not None:
            object.__setattr__(self, "bitwidths", tuple(sorted(int(b) for b in self.bitwidths)))

    @property
    def active_metrics(self) -> tuple[str, ...]:
        out = []
        if self.max_total_size_bits is not None:
            out.append("size")
        if self.max_total_latency_us is not None:
            out.append("latency")
        return tuple(out)


@dataclass(frozen=True)
class CandidateSet:
    """Per-block candidate lists in canonical order.

    ``pruned_on`` is the metric set the sources were Pareto-pruned with, or
    ``None`` for full LUTs (which support any constraint).
    """

    blocks: tuple[tuple[LutEntry, ...], ...]
    pruned_on: tuple[str, ...] | None = None
    merged: bool = False
    bitwidths: tuple[int, ...] = ()
    provenance: tuple[str, ...] = ()

    @property
    def sizes(self) -> list[int]:
        return [len(b) for b in self.blocks]

    @property
    def combinations(self) -> int:
        return math.prod(self.sizes)


@dataclass(frozen=True)
class Choice:
    block: int
    subnet_id: int
    bitwidth: int
    loss: float
    size_bits: int
    latency_us: float | None


@dataclass(frozen=True)
class SearchResult:
    choices: tuple[Choice, ...]
    objective: float
    total_size_bits: int
    total_latency_us: float | None
    ranks: tuple[int, ...]
    constraints: SearchConstraints = field(default_factory=SearchConstraints)
    provenance: tuple[str, ...] = ()

    @property
    def selection(self) -> tuple[tuple[int, int], ...]:
        return tuple((c.subnet_id, c.bitwidth) for c in self.choices)

    @property
    def policy(self) -> tuple[int, ...]:
        return tuple(c.bitwidth for c in self.choices)

    def to_dict(self) -> dict:
        return {
            "choices": [asdict(c) for c in self.choices],
            "objective_loss": self.objective,
            "total_size_bits": self.total_size_bits,
            "total_latency_us": self.total_latency_us,
            "ranks": list(self.ranks),
            "constraints": {
                "max_total_size_bits": self.constraints.max_total_size_bits,
                "max_total_latency_us": self.constraints.max_total_latency_us,
                "bitwidths": None if self.constraints.bitwidths is None else list(self.constraints.bitwidths),
                "base_size_bits": self.constraints.base_size_bits,
            },
            "provenance": list(self.provenance),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchResult":
        c = d.get("constraints", {})
        cons = SearchConstraints(c.get("max_total_size_bits"), c.get("max_total_latency_us"),
                                 c.get("bitwidths"), c.get("base_size_bits", 0))
        return cls(tuple(Choice(**ch) for ch in d["choices"]), d["objective_loss"],
                   d["total_size_bits"], d["total_latency_us"], tuple(d["ranks"]),
                   cons, tuple(d.get("provenance", ())))

    def describe(self) -> str:
        parts = " ".join(f"b{c.block}={c.subnet_id}@w{c.bitwidth}" for c in self.choices)
        lat = "" if self.total_latency_us is None else f" latency={self.total_latency_us:.3f}us"
        return f"loss={self.objective:.6g} size={self.total_size_bits}b{lat} {parts}"


# -- candidate preparation -------------------------------------------------

def concat_block_candidates(sources: Sequence[BlockLut | ParetoFront] | CandidateSet,
                            bitwidths: Iterable[int] | None = None,
                            num_blocks: int | None = None,
                            provenance: Sequence[str] = ()) -> CandidateSet:
    """Union each block's LUTs / fronts over the admitted bitwidths."""
    if isinstance(sources, CandidateSet):
        return _filter_candidates(sources, bitwidths)
    sources = list(sources)
    if not sources:
        raise ValidationError("no LUTs or fronts given")
    fronts = [s for s in sources if isinstance(s, ParetoFront)]
    if fronts and len(fronts) != len(sources):
        raise ValidationError("cannot mix Pareto fronts with full LUTs")
    pruned_on = None
    if fronts:
        sets = {f.metrics for f in fronts}
        if len(sets) != 1:
            raise IncompatibleError("fronts were pruned with different metric sets")
        pruned_on = fronts[0].metrics
    merged = any(getattr(s, "merged", False) for s in sources)
    all_bits = tuple(sorted({s.bitwidth for s in sources}))
    admitted = set(all_bits) if bitwidths is None else {int(b) for b in bitwidths}
    if merged and not admitted >= set(all_bits):
        raise IncompatibleError(
            "fronts were merge-pruned across bitwidths; a bitwidth filter would lose optima. "
            "Re-prune per bitwidth.")
    n = num_blocks if num_blocks is not None else max(s.block for s in sources) + 1
    blocks = []
    for i in range(n):
        pool = [e for s in sources if s.block == i and s.bitwidth in admitted for e in s.entries]
        if not pool:
            raise InfeasibleError(f"block {i} has no candidates for bitwidths {sorted(admitted)}",
                                  metric="candidates", block=i)
        blocks.append(tuple(sorted(pool, key=candidate_key)))
    return CandidateSet(tuple(blocks), pruned_on, merged,
                        tuple(sorted(admitted & set(all_bits))), tuple(provenance))


def _filter_candidates(cands: CandidateSet, bitwidths) -> CandidateSet:
    if bitwidths is None:
        return cands
    admitted = {int(b) for b in bitwidths}
    if cands.merged and not admitted >= set(cands.bitwidths):
        raise IncompatibleError("merge-pruned candidates cannot be filtered by bitwidth")
    blocks = []
    for i, blk in enumerate(cands.blocks):
        kept = tuple(e for e in blk if e.bitwidth in admitted)
        if not kept:
            raise InfeasibleError(f"block {i} has no candidates for bitwidths {sorted(admitted)}",
                                  metric="candidates", block=i)
        blocks.append(kept)
    return replace(cands, blocks=tuple(blocks),
                   bitwidths=tuple(sorted(admitted & set(cands.bitwidths))))


def _prepare(candidates, constraints: SearchConstraints | None) -> tuple[CandidateSet, SearchConstraints]:
    cons = constraints or SearchConstraints()
    cands = concat_block_candidates(candidates, cons.bitwidths)
    active = cons.active_metrics
    if cands.pruned_on is not None and not set(active) <= set(cands.pruned_on):
        raise IncompatibleError(
            f"constraints on {list(active)} but fronts were pruned on {list(cands.pruned_on)}")
    if "latency" in active:
        for i, blk in enumerate(cands.blocks):
            if any(e.latency_us is None for e in blk):
                raise IncompatibleError(
                    f"latency constraint but block {i} has candidates without latency "
                    "(latency is recorded for INT8 only by default; filter bitwidths to 8)")
    return cands, cons


def _fold(values) -> float:
    total = 0.0
    for v in values:
        total += v
    return total


def _check_minima(cands: CandidateSet, cons: SearchConstraints):
    """Raise when even the per-block minima break a budget."""
    if cons.max_total_size_bits is not None:
        minima = [min(e.size_bits for e in b) for b in cands.blocks]
        if cons.base_size_bits + sum(minima) > cons.max_total_size_bits:
            raise InfeasibleError(
                f"size budget {cons.max_total_size_bits} below minimum achievable "
                f"{cons.base_size_bits + sum(minima)} (per-block minima {minima})",
                metric="size", minima=minima, budget=cons.max_total_size_bits)
    if cons.max_total_latency_us is not None:
        minima = [min(e.latency_us for e in b) for b in cands.blocks]
        if _fold(minima) > cons.max_total_latency_us:
            raise InfeasibleError(
                f"latency budget {cons.max_total_latency_us} below minimum achievable "
                f"{_fold(minima)} (per-block minima {minima})",
                metric="latency", minima=minima, budget=cons.max_total_latency_us)


def _result(cands: CandidateSet, ranks: Sequence[int], cons: SearchConstraints) -> SearchResult:
    chosen = [cands.blocks[i][r] for i, r in enumerate(ranks)]
    choices = tuple(Choice(i, e.subnet_id, e.bitwidth, e.loss, e.size_bits, e.latency_us)
                    for i, e in enumerate(chosen))
    lats = [e.latency_us for e in chosen]
    return SearchResult(
        choices,
        _fold(e.loss for e in chosen),
        cons.base_size_bits + sum(e.size_bits for e in chosen),
        None if any(v is None for v in lats) else _fold(lats),
        tuple(int(r) for r in ranks),
        cons,
        cands.provenance,
    )


def _no_solution(cons: SearchConstraints):
    return InfeasibleError(
        "no selection satisfies the size and latency budgets jointly",
        metric="joint", budget=(cons.max_total_size_bits, cons.max_total_latency_us))


# -- searches ----------------------------------------------------------------

def unconstrained_best(candidates, constraints: SearchConstraints | None = None) -> SearchResult:
    """Top-ranked candidate of every block."""
    cons = replace(constraints or SearchConstraints(), max_total_size_bits=None,
                   max_total_latency_us=None)
    cands, cons = _prepare(candidates, cons)
    return _result(cands, [0] * len(cands.blocks), cons)


def branch_and_bound_search(candidates, constraints: SearchConstraints | None = None,
                            workers: int = 1) -> SearchResult:
    """Exact depth-first branch and bound.

    A partial selection is cut when its loss plus the remaining blocks'
    minimum losses cannot beat the incumbent, or when its size / latency plus
    the remaining minima exceeds a budget.  With ``workers > 1`` the
    candidates of block 0 are split across threads that share the best
    objective value; the result is identical to the sequential search.
    """
    cands, cons = _prepare(candidates, constraints)
    _check_minima(cands, cons)
    n = len(cands.blocks)
    losses = [[e.loss for e in b] for b in cands.blocks]
    sizes = [[e.size_bits for e in b] for b in cands.blocks]
    size_budget = None
    if cons.max_total_size_bits is not None:
        size_budget = cons.max_total_size_bits - cons.base_size_bits
    lat_budget = cons.max_total_latency_us
    lats = [[e.latency_us for e in b] for b in cands.blocks] if lat_budget is not None else None

    min_loss = [l[0] for l in losses]
    # suffix sums of minima; sizes are integers so these are exact
    rest_size = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        rest_size[i] = rest_size[i + 1] + min(sizes[i])
    min_lat = [min(l) for l in lats] if lats is not None else None

    def loss_bound(k, partial):
        for j in range(k, n):
            partial += min_loss[j]
        return partial

    def lat_bound(k, partial):
        for j in range(k, n):
            partial += min_lat[j]
        return partial

    shared = {"best": math.inf}
    lock = threading.Lock()

    def run(first: Sequence[int]):
        best = math.inf
        best_ranks = None
        ranks = [0] * n

        def dfs(k, loss, size, lat):
            nonlocal best, best_ranks
            lk, sk = losses[k], sizes[k]
            latk = lats[k] if lats is not None else None
            last = k == n - 1
            idx = first if k == 0 else range(len(lk))
            for r in idx:
                nl = loss + lk[r]
                bound = nl if last else loss_bound(k + 1, nl)
                if bound >= best or bound > shared["best"]:
                    break
                ns = size + sk[r]
                if size_budget is not None and ns + rest_size[k + 1] > size_budget:
                    continue
                nlat = 0.0
                if latk is not None:
                    nlat = lat + latk[r]
                    if (nlat if last else lat_bound(k + 1, nlat)) > lat_budget:
                        continue
                ranks[k] = r
                if last:
                    best = nl
                    best_ranks = tuple(ranks)
                    if workers > 1:
                        with lock:
                            if nl < shared["best"]:
                                shared["best"] = nl
                    break
                dfs(k + 1, nl, ns, nlat)

        dfs(0, 0.0, 0, 0.0)
        return best, best_ranks

    n0 = len(losses[0])
    if workers <= 1:
        best, best_ranks = run(range(n0))
    else:
        parts = [range(w, n0, workers) for w in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            found = [f for f in pool.map(run, parts) if f[1] is not None]
        best, best_ranks = min(found, key=lambda f: (f[0], f[1])) if found else (math.inf, None)
    if best_ranks is None:
        raise _no_solution(cons)
    return _result(cands, best_ranks, cons)


def brute_force_search(candidates, constraints: SearchConstraints | None = None,
                       cap: int = BRUTE_FORCE_CAP) -> SearchResult:
    """Exhaustive enumeration with the same sums and tie-breaking as
    :func:`branch_and_bound_search`; vectorized over trailing blocks."""
    cands, cons = _prepare(candidates, constraints)
    count = cands.combinations
    if count > cap:
        raise OracleCapError(count, cap)
    _check_minima(cands, cons)
    n = len(cands.blocks)
    loss = [np.array([e.loss for e in b]) for b in cands.blocks]
    size = [np.array([e.size_bits for e in b], dtype=np.int64) for b in cands.blocks]
    size_budget = None
    if cons.max_total_size_bits is not None:
        size_budget = cons.max_total_size_bits - cons.base_size_bits
    lat_budget = cons.max_total_latency_us
    lat = None
    if lat_budget is not None:
        lat = [np.array([e.latency_us for e in b], dtype=np.float64) for b in cands.blocks]

    split = n
    inner = 1
    while split > 0 and inner * len(loss[split - 1]) <= _INNER_CHUNK:
        split -= 1
        inner *= len(loss[split])
    split = min(split, n - 1)
    inner_shape = tuple(len(loss[j]) for j in range(split, n))

    def grow(acc, cols):
        # left fold: element (i, j, ...) = (acc + cols[0][i]) + cols[1][j] + ...
        acc = np.asarray(acc)
        for col in cols:
            acc = acc[..., None] + col
        return acc

    best = math.inf
    best_ranks = None
    for prefix in itertools.product(*(range(len(loss[j])) for j in range(split))):
        pl, ps, pt = 0.0, 0, 0.0
        for j, r in enumerate(prefix):
            pl += loss[j][r]
            ps += int(size[j][r])
            if lat is not None:
                pt += lat[j][r]
        tl = grow(np.float64(pl), loss[split:]).ravel()
        ok = np.ones(tl.shape, dtype=bool)
        if size_budget is not None:
            ok &= grow(np.int64(ps), size[split:]).ravel() <= size_budget
        if lat is not None:
            ok &= grow(np.float64(pt), lat[split:]).ravel() <= lat_budget
        if not ok.any():
            continue
        masked = np.where(ok, tl, np.inf)
        i = int(np.argmin(masked))
        if masked[i] < best:
            best = float(masked[i])
            best_ranks = prefix + tuple(int(v) for v in np.unravel_index(i, inner_shape))
    if best_ranks is None:
        raise _no_solution(cons)
    return _result(cands, best_ranks, cons)


# -- sweeps ------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    size_budget: int | None
    latency_budget: float | None
    result: SearchResult | None
    error: str | None = None
    nondominated: bool = False

    @property
    def feasible(self) -> bool:
        return self.result is not None


def parse_grid(text: str, integer: bool = False) -> list:
    """``lo:hi:steps`` (inclusive, evenly spaced) or a comma list."""
    if ":" in text:
        try:
            lo, hi, steps = text.split(":")
            values = np.linspace(float(lo), float(hi), int(steps))
        except ValueError as exc:
            raise ValidationError(f"bad grid {text!r}; expected lo:hi:steps") from exc
    else:
        try:
            values = [float(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise ValidationError(f"bad grid {text!r}") from exc
    if len(values) == 0:
        raise ValidationError("empty budget grid")
    return [int(math.floor(v)) for v in values] if integer else [float(v) for v in values]


def _dominates(a: SearchResult, b: SearchResult, use_lat: bool) -> bool:
    va = [a.objective, a.total_size_bits] + ([a.total_latency_us] if use_lat else [])
    vb = [b.objective, b.total_size_bits] + ([b.total_latency_us] if use_lat else [])
    return all(x <= y for x, y in zip(va, vb)) and any(x < y for x, y in zip(va, vb))


def sweep(candidates, size_grid: Sequence[int] | None = None,
          latency_grid: Sequence[float] | None = None,
          constraints: SearchConstraints | None = None, workers: int = 1) -> list[SweepPoint]:
    """Exact search at every grid point, ascending by budget.

    Infeasible points are kept with their error message.  ``nondominated``
    marks feasible points whose result is not dominated over (objective,
    size[, latency]) by another point's result.
    """
    if not size_grid and not latency_grid:
        raise ValidationError("sweep needs a non-empty budget grid")
    base = constraints or SearchConstraints()
    cands = concat_block_candidates(candidates, base.bitwidths)
    sizes = sorted(size_grid) if size_grid else [None]
    lat_grid = sorted(latency_grid) if latency_grid else [None]

    def one(point):
        s, t = point
        cons = replace(base, max_total_size_bits=s, max_total_latency_us=t)
        try:
            return SweepPoint(s, t, branch_and_bound_search(cands, cons))
        except InfeasibleError as exc:
            return SweepPoint(s, t, None, str(exc))

    grid = list(itertools.product(sizes, lat_grid))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(one, grid))
    else:
        points = [one(p) for p in grid]

    use_lat = latency_grid is not None and len(latency_grid) > 0
    feasible = [p.result for p in points if p.feasible]
    out = []
    for p in points:
        nd = p.feasible and not any(_dominates(r, p.result, use_lat) for r in feasible)
        out.append(replace(p, nondominated=nd))
    return out
