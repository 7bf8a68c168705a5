# %% [markdown]
# # End to end: config -> LUTs -> fronts -> result
# The same run is available as `bwnas run --config configs/smoke.json --out out/`.

# %%
import tempfile
from pathlib import Path
from bwnas.pipeline import emit_report, load_config, read_result, run_pipeline

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "smoke.json")
with tempfile.TemporaryDirectory() as d:
    out = run_pipeline(cfg, d)
    print((out / "summary.txt").read_text())
    csv_path, txt_path = emit_report([read_result(out / "result.json")], Path(d) / "report")
    print(csv_path.read_text())
