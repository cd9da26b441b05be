"""Haar reference |I3| per system size.

    python3 scripts/haar_reference.py [--config configs/haar_ref.yaml]
"""
from _common import run_from_args

res = run_from_args("haar_ref.yaml", __doc__)
for L, ref in sorted(res.references.items()):
    print(f"L={L:>2}  <|I3|> = {ref.mean_abs_i3:.4f} +- {ref.std_error:.4f}  (n={ref.n_samples}, seed={ref.seed})")
