"""Haar-normalized TMI versus time with a late-window saturation check.

    python3 scripts/tmi_dynamics.py --config configs/tmi_dynamics_integrable.yaml
"""
from _common import run_from_args

res = run_from_args("tmi_dynamics_chaotic.yaml", __doc__)
print(f"{'L':>3} {'p':>7} {'TMI(N_t)':>10} {'+-':>8} {'drift':>9} {'signif':>7}  saturated")
for (name, L, p), s in sorted(res.series.items()):
    if name != "tmi":
        continue
    chk = res.saturation_checks.get((L, p), {})
    print(f"{L:>3} {p:>7g} {s.mean[-1]:>10.4f} {s.std_error[-1]:>8.4f} "
          f"{chk.get('drift', float('nan')):>9.4f} {chk.get('significance', float('nan')):>7.1f}  "
          f"{chk.get('saturated', '')}")
print(f"outputs in {res.out_dir}")
