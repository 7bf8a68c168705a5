"""End-to-end orchestration: space -> teacher -> LUTs -> fronts -> search -> report."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import BwnasError, ValidationError
from .lut import (
    LatencyModel,
    LutOptions,
    SyntheticLatency,
    TableLatency,
    build_luts,
    make_manifest,
    manifest_digest,
    write_luts,
)
from .pareto import parse_metrics, prune_luts, write_fronts
from .quant import QuantMenu
from .search import SearchConstraints, SearchResult, concat_block_candidates, unconstrained_best
from .space import OpChoice, SearchSpace, default_space, space_from_dict, space_hash
from .synthnet import (
    DEFAULT_LENGTH,
    DEFAULT_RIDGE,
    DEFAULT_SAMPLES,
    DEFAULT_TEACHER_OP,
    make_calibration_set,
    make_teacher,
)

log = logging.getLogger(__name__)


class StageError(BwnasError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


@dataclass(frozen=True)
class PipelineConfig:
    space: SearchSpace = field(default_factory=default_space)
    teacher_seed: int = 0
    student_seed: int = 1
    calibration_seed: int = 2
    samples: int = DEFAULT_SAMPLES
    length: int = DEFAULT_LENGTH
    bits: tuple[int, ...] = (4, 6, 8)
    fit: bool = False
    ridge: float = DEFAULT_RIDGE
    act_bits: int | None = 8
    teacher_op: OpChoice = DEFAULT_TEACHER_OP
    latency: str | None = None          # None, "synthetic" or a CSV path
    latency_alpha_us_per_mac: float = 1e-4
    latency_beta_us: float = 2.0
    latency_all_bits: bool = False
    base_size_bits: int = 0
    prune_metrics: tuple[str, ...] = ("size",)
    merge_bitwidths: bool = False
    workers: int = 1

    def __post_init__(self):
        if min(self.teacher_seed, self.student_seed, self.calibration_seed) < 0:
            raise ValidationError("seeds must be non-negative")
        if self.samples < 1 or self.length < 1:
            raise ValidationError("samples and length must be positive")
        if self.latency not in (None, "synthetic") and not Path(self.latency).is_file():
            raise ValidationError(f"latency table {self.latency} does not exist")
        object.__setattr__(self, "bits", QuantMenu(tuple(self.bits)).bitwidths)
        object.__setattr__(self, "prune_metrics", parse_metrics(self.prune_metrics))

    @property
    def menu(self) -> QuantMenu:
        return QuantMenu(self.bits)

    def latency_model(self) -> LatencyModel | None:
        if self.latency is None:
            return None
        if self.latency == "synthetic":
            return SyntheticLatency(self.latency_alpha_us_per_mac, self.latency_beta_us, self.length)
        return TableLatency.from_csv(self.latency)

    def lut_options(self) -> LutOptions:
        return LutOptions(fit=self.fit, ridge=self.ridge, act_bits=self.act_bits,
                          latency=self.latency_model(), latency_all_bits=self.latency_all_bits,
                          student_seed=self.student_seed, workers=self.workers)

    def provenance(self) -> dict:
        """Everything that determines artifact contents (worker count excluded)."""
        lat = self.latency_model()
        return {
            "seeds": {"teacher": self.teacher_seed, "student": self.student_seed,
                      "calibration": self.calibration_seed},
            "samples": self.samples,
            "length": self.length,
            "fit": self.fit,
            "ridge": self.ridge,
            "act_bits": self.act_bits,
            "teacher_op": [self.teacher_op.kernel_size, self.teacher_op.expansion],
            "latency": None if lat is None else lat.describe(),
            "latency_bits": None if lat is None else ("all" if self.latency_all_bits else [max(self.bits)]),
            "base_size_bits": self.base_size_bits,
        }


_KEYS = {
    "teacher_seed", "student_seed", "calibration_seed", "samples", "length", "bits", "fit",
    "ridge", "act_bits", "latency", "latency_alpha_us_per_mac", "latency_beta_us",
    "latency_all_bits", "base_size_bits", "prune_metrics", "merge_bitwidths", "workers",
}


def config_from_dict(cfg: dict, base_dir: Path | None = None) -> PipelineConfig:
    """Config schema: ``{"space": {...}, "seed": S | "seeds": {...}, <PipelineConfig fields>}``.

    ``seed`` is shorthand for teacher/student/calibration seeds S, S+1, S+2.
    """
    kw = {}
    unknown = set(cfg) - _KEYS - {"space", "seed", "seeds", "teacher_op"}
    if unknown:
        raise ValidationError(f"unknown config keys {sorted(unknown)}")
    if "space" in cfg:
        kw["space"] = space_from_dict(cfg["space"])
    if "seed" in cfg:
        s = int(cfg["seed"])
        kw.update(teacher_seed=s, student_seed=s + 1, calibration_seed=s + 2)
    for role, v in cfg.get("seeds", {}).items():
        kw[f"{role}_seed"] = int(v)
    if "teacher_op" in cfg:
        kw["teacher_op"] = OpChoice(*cfg["teacher_op"])
    for k in _KEYS & set(cfg):
        kw[k] = cfg[k]
    if isinstance(kw.get("bits"), str):
        kw["bits"] = tuple(int(b) for b in kw["bits"].split(","))
    lat = kw.get("latency")
    if lat not in (None, "synthetic") and base_dir is not None and not Path(lat).is_absolute():
        kw["latency"] = str(base_dir / lat)
    try:
        return PipelineConfig(**kw)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc


def load_config(path) -> PipelineConfig:
    p = Path(path)
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return config_from_dict(cfg, p.parent)


# -- stages ------------------------------------------------------------------

def build_stage(cfg: PipelineConfig, out_dir) -> Path:
    teacher = make_teacher(cfg.space, cfg.teacher_seed, cfg.teacher_op)
    calib = make_calibration_set(cfg.space, teacher, cfg.calibration_seed, cfg.samples, cfg.length)
    luts = build_luts(cfg.space, teacher, cfg.menu, calib, cfg.lut_options())
    manifest = make_manifest(cfg.space, cfg.bits, "luts", **cfg.provenance())
    write_luts(luts, manifest, out_dir)
    return Path(out_dir)


def prune_stage(lut_dir, out_dir, metrics, bits: Sequence[int] | None = None,
                merge_bitwidths: bool = False, space: SearchSpace | None = None) -> Path:
    from .lut import read_luts

    luts, manifest = read_luts(lut_dir, space)
    if bits is not None:
        luts = [l for l in luts if l.bitwidth in set(bits)]
        if not luts:
            raise ValidationError(f"no LUTs for bitwidths {list(bits)}")
    fronts = prune_luts(luts, metrics, merge_bitwidths)
    m = {k: v for k, v in manifest.items() if k != "files"}
    m["bits"] = sorted({l.bitwidth for l in luts})
    write_fronts(fronts, m, out_dir, source_dir=lut_dir)
    return Path(out_dir)


def write_result(result: SearchResult, path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    return p


def read_result(path) -> SearchResult:
    return SearchResult.from_dict(json.loads(Path(path).read_text()))


def run_pipeline(cfg: PipelineConfig, out_dir) -> Path:
    """Build LUTs, prune them, search the unconstrained optimum and report.

    Layout: ``luts/``, ``fronts/``, ``result.json``, ``summary.txt``,
    ``manifest.json``.  Identical configs give byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def stage(name, fn, *args, **kw):
        log.info("stage %s", name)
        try:
            return fn(*args, **kw)
        except (BwnasError, OSError, ValueError) as exc:
            raise StageError(name, exc) from exc

    stage("luts", build_stage, cfg, out / "luts")
    prune_bits = None
    if "latency" in cfg.prune_metrics and not cfg.latency_all_bits:
        prune_bits = [max(cfg.bits)]
    stage("prune", prune_stage, out / "luts", out / "fronts", cfg.prune_metrics,
          prune_bits, cfg.merge_bitwidths, cfg.space)

    def search():
        from .pareto import read_fronts

        fronts, _ = read_fronts(out / "fronts", cfg.space)
        cands = concat_block_candidates(fronts, provenance=[manifest_digest(out / "fronts")])
        return unconstrained_best(cands, SearchConstraints(base_size_bits=cfg.base_size_bits))

    result = stage("search", search)
    stage("report", write_result, result, out / "result.json")
    summary = [
        f"space {space_hash(cfg.space)}",
        f"blocks {cfg.space.num_blocks}  bitwidths {list(cfg.bits)}  subnets {cfg.space.subnet_counts()}",
        "",
        "unconstrained optimum:",
        format_table([result]),
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    manifest = {
        "package_version": __version__,
        "space_hash": space_hash(cfg.space),
        "config": {"space": cfg.space.to_dict(), **cfg.provenance(),
                   "bits": list(cfg.bits), "prune_metrics": list(cfg.prune_metrics),
                   "merge_bitwidths": cfg.merge_bitwidths},
        "luts_manifest_sha256": manifest_digest(out / "luts"),
        "fronts_manifest_sha256": manifest_digest(out / "fronts"),
        "result_sha256": hashlib.sha256((out / "result.json").read_bytes()).hexdigest(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


# -- reports -----------------------------------------------------------------

def report_rows(results: Sequence[SearchResult]) -> list[dict]:
    def key(r):
        c = r.constraints
        return (c.max_total_size_bits if c.max_total_size_bits is not None else float("inf"),
                c.max_total_latency_us if c.max_total_latency_us is not None else float("inf"))

    rows = []
    for r in sorted(results, key=key):
        row = {
            "budget_size_bits": r.constraints.max_total_size_bits,
            "budget_latency_us": r.constraints.max_total_latency_us,
            "objective_loss": r.objective,
            "total_size_bits": r.total_size_bits,
            "total_latency_us": r.total_latency_us,
        }
        for c in r.choices:
            row[f"b{c.block}"] = f"{c.subnet_id}@w{c.bitwidth}"
        rows.append(row)
    return rows


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_report_csv(rows: Sequence[dict], path) -> Path:
    if not rows:
        raise ValidationError("nothing to report")
    columns = list(rows[0])
    for r in rows[1:]:
        columns += [k for k in r if k not in columns]
    p = Path(path)
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
    return p


def read_report_csv(path) -> list[dict]:
    ints = {"budget_size_bits", "total_size_bits"}
    floats = {"budget_latency_us", "objective_loss", "total_latency_us"}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                if v == "":
                    parsed[k] = None
                elif k in ints:
                    parsed[k] = int(v)
                elif k in floats:
                    parsed[k] = float(v)
                else:
                    parsed[k] = v
            out.append(parsed)
    return out


def format_table(results: Sequence[SearchResult]) -> str:
    rows = report_rows(results)
    head = f"{'size budget':>14} {'lat budget':>11} {'loss':>14} {'size bits':>12} {'latency us':>11}  selection"
    lines = [head, "-" * len(head)]
    for r in rows:
        sel = " ".join(f"{k}={v}" for k, v in r.items() if k.startswith("b") and k[1:].isdigit())
        lat = "" if r["total_latency_us"] is None else f"{r['total_latency_us']:.3f}"
        sb = _cell(r["budget_size_bits"]) or "-"
        lb = "-" if r["budget_latency_us"] is None else f"{r['budget_latency_us']:.3f}"
        lines.append(f"{sb:>14} {lb:>11} {r['objective_loss']:>14.6f} "
                     f"{r['total_size_bits']:>12} {lat:>11}  {sel}")
    return "\n".join(lines)


def emit_report(results: Sequence[SearchResult], out_prefix) -> tuple[Path, Path]:
    """Write ``<prefix>.csv`` and ``<prefix>.txt`` (rows ascending by budget)."""
    if not results:
        raise ValidationError("emit_report needs at least one result")
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = write_report_csv(report_rows(results), prefix.with_suffix(".csv"))
    txt_path = prefix.with_suffix(".txt")
    txt_path.write_text(format_table(results) + "\n")
    return csv_path, txt_path
