import json
import shutil
from pathlib import Path

import pytest

from bwnas.cli import main
from bwnas.pipeline import (
    config_from_dict,
    emit_report,
    load_config,
    read_report_csv,
    read_result,
    run_pipeline,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    assert main(["run", "--config", str(CONFIGS / "smoke.json"), "--out", str(out / "run")]) == 0
    return out


def test_run_layout(smoke_run):
    run = smoke_run / "run"
    assert (run / "result.json").is_file() and (run / "summary.txt").is_file()
    assert len(list((run / "luts").glob("*.csv"))) == 6
    assert len(list((run / "fronts").glob("*.csv"))) == 6


def test_search_and_exit_codes(smoke_run, capsys):
    fronts = str(smoke_run / "run" / "fronts")
    res = str(smoke_run / "r.json")
    assert main(["search", "--fronts", fronts, "--max-size-bits", "40000", "--out", res]) == 0
    r = read_result(res)
    assert r.total_size_bits <= 40000
    assert main(["search", "--fronts", fronts, "--max-size-bits", "40000", "--brute-force"]) == 0
    assert main(["search", "--fronts", fronts, "--max-size-bits", "10"]) == 3
    assert main(["search", "--fronts", fronts, "--max-latency-us", "100"]) == 4
    assert main(["search", "--fronts", str(smoke_run / "nowhere")]) == 5
    assert main(["search", "--fronts", fronts, "--config", str(CONFIGS / "default.json")]) == 4
    assert "infeasible" not in capsys.readouterr().out


def test_prune_verify_sweep_report(smoke_run):
    luts = str(smoke_run / "run" / "luts")
    lat = str(smoke_run / "lat")
    # latency is recorded for 8-bit LUTs only
    assert main(["luts", "prune", "--in", luts, "--metrics", "size,latency", "--out", lat]) == 2
    assert main(["luts", "prune", "--in", luts, "--metrics", "size,latency", "--bits", "8",
                 "--out", lat]) == 0
    assert main(["search", "--fronts", lat, "--max-size-bits", "50000",
                 "--max-latency-us", "60"]) in (0, 3)
    assert main(["verify", "--luts", luts, "--trials", "3", "--seed", "1"]) == 0
    grid = str(smoke_run / "sweep.csv")
    assert main(["sweep", "--fronts", str(smoke_run / "run" / "fronts"),
                 "--size-grid", "10000:60000:5", "--all", "--out", grid]) == 0
    rows = read_report_csv(grid)
    budgets = [r["budget_size_bits"] for r in rows]
    assert budgets == sorted(budgets)
    res = str(smoke_run / "run" / "result.json")
    assert main(["report", "--results", res, "--out", str(smoke_run / "rep")]) == 0
    assert (smoke_run / "rep.csv").is_file()


def test_report_roundtrip(smoke_run, tmp_path):
    r = read_result(smoke_run / "run" / "result.json")
    csv_path, _ = emit_report([r], tmp_path / "rep")
    rows = read_report_csv(csv_path)
    assert rows[0]["objective_loss"] == r.objective
    assert rows[0]["total_size_bits"] == r.total_size_bits
    assert rows[0]["b0"] == f"{r.choices[0].subnet_id}@w{r.choices[0].bitwidth}"


def test_validation_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"samples": 0}')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text('{"bogus": 1}')
    assert main(["space", "describe", "--config", str(bad)]) == 2
    assert main(["space", "describe"]) == 0
    cfg = config_from_dict({"seed": 7})
    assert (cfg.teacher_seed, cfg.student_seed, cfg.calibration_seed) == (7, 8, 9)
    assert load_config(CONFIGS / "default.json").space.subnet_counts() == [216, 216, 1296, 1296, 216, 6]


def test_run_is_deterministic(smoke_run, tmp_path):
    cfg = load_config(CONFIGS / "smoke.json")
    second = run_pipeline(cfg, tmp_path / "again")
    first = smoke_run / "run"
    files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file())
    for f in files:
        assert (first / f).read_bytes() == (second / f).read_bytes()
