"""Saturation table of -<normalized TMI> followed by the scaling collapse.

    python3 scripts/saturation_scaling.py [--config configs/tmi_saturation.yaml]

Writes saturation.csv, then r2_surface.csv, collapse.csv and best_fit.json
into a fss/ subdirectory of the same output directory.
"""
from pathlib import Path

from _common import run_from_args
from scramble_lab.analysis import curve_crossings
from scramble_lab.config import ExperimentConfig
from scramble_lab.runner import run_fss_fit

res = run_from_args("tmi_saturation.yaml", __doc__)
sizes = sorted({L for _, L in res.table})
ps = sorted({p for p, _ in res.table})
print("p       " + "".join(f"{'L=' + str(L):>18}" for L in sizes))
for p in ps:
    cells = "".join(f"{res.table[(p, L)][0]:>10.4f}+-{res.table[(p, L)][1]:<6.4f}" for L in sizes)
    print(f"{p:<8g}{cells}")
for a, b in zip(sizes, sizes[1:]):
    cross = curve_crossings(res.table, a, b)
    print(f"crossings L={a}/{b}: " + (", ".join(f"{c['p']:.3f}" for c in cross) or "none resolved"))

if len(sizes) >= 2:
    fss_cfg = ExperimentConfig("fss-fit", output_dir=str(Path(res.out_dir) / "fss"))
    fss = run_fss_fit(fss_cfg, table=res.table).fss
    print(f"best collapse: p_c={fss.best_pc:g} nu={fss.best_nu:g} R2={fss.best_r2:.4f}")
