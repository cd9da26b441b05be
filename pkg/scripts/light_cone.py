"""Sliding-partition TMI on the (t, r) plane, printed as a text heatmap.

    python3 scripts/light_cone.py [--config configs/tmi_spatial.yaml]
"""
from _common import run_from_args

res = run_from_args("tmi_spatial.yaml", __doc__)
for (L, p), grid in sorted(res.heatmaps.items()):
    rs = sorted({r for _, r in grid})
    ts = sorted({t for t, _ in grid})
    print(f"L={L} p={p:g}: <normalized TMI>, rows t, columns r")
    print("  t " + "".join(f"{r:>8}" for r in rs))
    for t in ts:
        print(f"{t:>3} " + "".join(f"{grid[(t, r)][0]:>8.3f}" for r in rs))
print(f"outputs in {res.out_dir}")
