"""Purity of the output half versus time and the log-log fit quality per p.

    python3 scripts/purity_law.py [--config configs/purity_dynamics.yaml]
"""
from _common import run_from_args

res = run_from_args("purity_dynamics.yaml", __doc__)
print(f"{'L':>3} {'p':>7} {'alpha':>8} {'R2':>8}  purity(t=50)")
for (L, p), fit in sorted(res.fits.items()):
    s = res.series[("purity", L, p)]
    print(f"{L:>3} {p:>7g} {fit.alpha:>8.3f} {fit.r_squared:>8.4f}  {s.mean[-1]:.4f}")
print(f"outputs in {res.out_dir}")
