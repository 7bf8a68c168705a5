"""Command line interface.

Exit codes: 0 success, 2 validation / usage, 3 infeasible, 4 incompatible
artifacts, 5 I/O or file format, 6 brute force refused (over cap).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import (
    BwnasError,
    IncompatibleError,
    InfeasibleError,
    LutFormatError,
    OracleCapError,
    ValidationError,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_INCOMPATIBLE = 4
EXIT_IO = 5
EXIT_REFUSED = 6


def exit_code(exc: BaseException) -> int:
    from .pipeline import StageError

    if isinstance(exc, StageError):
        return exit_code(exc.cause)
    if isinstance(exc, InfeasibleError):
        return EXIT_INFEASIBLE
    if isinstance(exc, IncompatibleError):
        return EXIT_INCOMPATIBLE
    if isinstance(exc, (LutFormatError, OSError)):
        return EXIT_IO
    if isinstance(exc, OracleCapError):
        return EXIT_REFUSED
    return EXIT_VALIDATION


def _int_list(text: str) -> list[int]:
    try:
        return [int(t.strip().lstrip("wW")) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of integers, got {text!r}") from None


def _config(args):
    from .pipeline import PipelineConfig, load_config

    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    over = {}
    if getattr(args, "bits", None):
        over["bits"] = tuple(args.bits)
    if getattr(args, "samples", None) is not None:
        over["samples"] = args.samples
    if getattr(args, "seed", None) is not None:
        s = args.seed
        over.update(teacher_seed=s, student_seed=s + 1, calibration_seed=s + 2)
    if getattr(args, "fit", False):
        over["fit"] = True
    if getattr(args, "latency", None):
        over["latency"] = args.latency
    if getattr(args, "workers", None):
        over["workers"] = args.workers
    return replace(cfg, **over) if over else cfg


# -- commands ----------------------------------------------------------------

def cmd_space_describe(args):
    from .space import describe_space

    print(describe_space(_config(args).space))


def cmd_luts_build(args):
    from .pipeline import build_stage

    cfg = _config(args)
    out = build_stage(cfg, args.out)
    print(f"wrote {cfg.space.num_blocks * len(cfg.bits)} LUTs to {out}")


def cmd_luts_prune(args):
    from .pipeline import prune_stage

    out = prune_stage(args.input, args.out, args.metrics, args.bits, args.merge_bitwidths)
    print(f"wrote fronts to {out}")


def _load_candidates(args):
    from .lut import manifest_digest
    from .pareto import read_fronts
    from .search import concat_block_candidates
    from .space import space_hash

    expected = None
    if getattr(args, "config", None):
        expected = space_hash(_config(args).space)
    fronts, manifest = read_fronts(args.fronts, expected_hash=expected)
    cands = concat_block_candidates(fronts, args.bits, len(manifest["space"]["blocks"]),
                                    provenance=[manifest_digest(args.fronts)])
    return cands, manifest


def _constraints(args, manifest):
    from .search import SearchConstraints

    base = args.base_size_bits
    if base is None:
        base = int(manifest.get("base_size_bits", 0) or 0)
    return SearchConstraints(getattr(args, "max_size_bits", None),
                             getattr(args, "max_latency_us", None), args.bits, base)


def cmd_search(args):
    from .pipeline import write_result
    from .search import branch_and_bound_search, brute_force_search

    cands, manifest = _load_candidates(args)
    cons = _constraints(args, manifest)
    fn = brute_force_search if args.brute_force else branch_and_bound_search
    result = fn(cands, cons)
    print(result.describe())
    if args.out:
        write_result(result, args.out)


def cmd_sweep(args):
    from .pipeline import report_rows, write_report_csv
    from .search import parse_grid, sweep

    cands, manifest = _load_candidates(args)
    cons = _constraints(args, manifest)
    size_grid = parse_grid(args.size_grid, integer=True) if args.size_grid else None
    lat_grid = parse_grid(args.latency_grid) if args.latency_grid else None
    points = sweep(cands, size_grid, lat_grid, cons, workers=args.workers or 1)
    for p in points:
        status = p.result.describe() if p.feasible else f"infeasible: {p.error}"
        flag = "*" if p.nondominated else " "
        print(f"{flag} size<={p.size_budget} lat<={p.latency_budget}: {status}")
    keep = [p.result for p in points if p.feasible and (args.all or p.nondominated)]
    if not keep:
        raise InfeasibleError("no grid point is feasible", metric="grid")
    write_report_csv(report_rows(keep), args.out)


def cmd_verify(args):
    from .lut import read_luts
    from .verify import format_reports, run_trials

    luts, _ = read_luts(args.luts)
    reports = run_trials(luts, args.trials, args.seed, args.max_blocks, args.max_combinations)
    print(format_reports(reports))
    if not all(r.passed for r in reports):
        return 1


def cmd_report(args):
    from .pipeline import emit_report, read_result

    results = [read_result(p) for p in args.results]
    csv_path, txt_path = emit_report(results, args.out)
    print(txt_path.read_text(), end="")
    print(f"wrote {csv_path} and {txt_path}")


def cmd_run(args):
    from .pipeline import run_pipeline

    out = run_pipeline(_config(args), args.out)
    print((out / "summary.txt").read_text(), end="")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bwnas", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def config_args(sp, build=False):
        sp.add_argument("--config", help="pipeline config (JSON)")
        if build:
            sp.add_argument("--bits", type=_int_list, help="bitwidth menu, e.g. 4,6,8")
            sp.add_argument("--samples", type=int, help="calibration samples M")
            sp.add_argument("--seed", type=int, help="base seed S (teacher S, student S+1, calibration S+2)")
            sp.add_argument("--fit", action="store_true", help="ridge-fit the last projection")
            sp.add_argument("--latency", help="'synthetic' or a block,subnet_id,latency_us CSV")
            sp.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")

    space = sub.add_parser("space", help="search-space utilities").add_subparsers(dest="sub", required=True)
    d = space.add_parser("describe", help="print block geometry and subnet counts")
    config_args(d)
    d.set_defaults(func=cmd_space_describe)

    luts = sub.add_parser("luts", help="build or prune LUTs").add_subparsers(dest="sub", required=True)
    b = luts.add_parser("build", help="populate the N x B loss/size/latency LUTs")
    config_args(b, build=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_luts_build)

    pr = luts.add_parser("prune", help="keep Pareto-optimal entries of each LUT")
    pr.add_argument("--in", dest="input", required=True)
    pr.add_argument("--metrics", default="size", help="size, latency or size,latency")
    pr.add_argument("--bits", type=_int_list, help="only prune these bitwidths' LUTs")
    pr.add_argument("--merge-bitwidths", action="store_true",
                    help="also drop entries dominated by another bitwidth of the same block")
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_luts_prune)

    def search_args(sp):
        sp.add_argument("--fronts", required=True)
        sp.add_argument("--bits", type=_int_list, help="admitted bitwidths, e.g. 8 or 4,6,8")
        sp.add_argument("--base-size-bits", type=int, help="fixed size of non-searchable parts")
        sp.add_argument("--config", help="reject fronts built for a different space")

    s = sub.add_parser("search", help="exact constrained search over fronts")
    search_args(s)
    s.add_argument("--max-size-bits", type=int)
    s.add_argument("--max-latency-us", type=float)
    s.add_argument("--brute-force", action="store_true", help="use the exhaustive oracle")
    s.add_argument("--out", help="result JSON")
    s.set_defaults(func=cmd_search)

    sw = sub.add_parser("sweep", help="search across a budget grid")
    search_args(sw)
    sw.add_argument("--size-grid", help="lo:hi:steps or comma list (bits)")
    sw.add_argument("--latency-grid", help="lo:hi:steps or comma list (us)")
    sw.add_argument("--all", action="store_true", help="write dominated points too")
    sw.add_argument("--workers", type=int)
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="randomized oracle-equivalence and pruning-safety checks")
    v.add_argument("--luts", required=True)
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--max-blocks", type=int, default=4)
    v.add_argument("--max-combinations", type=int, default=5_000_000)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="CSV + text table from result files")
    r.add_argument("--results", nargs="+", required=True)
    r.add_argument("--out", required=True, help="output prefix")
    r.set_defaults(func=cmd_report)

    run = sub.add_parser("run", help="full pipeline: LUTs, fronts, search, summary")
    config_args(run, build=True)
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
    except (BwnasError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return rc or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
