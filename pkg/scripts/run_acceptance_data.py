"""Generate (or resume) every dataset the acceptance suite reads.

Results land in runs/acceptance/<name>/ and trajectory records are reused on
re-runs whose configuration fingerprint matches, so an interrupted run can
simply be restarted. Run from anywhere:

    python3 scripts/run_acceptance_data.py [name ...]
"""
import logging
import os
import sys
import time
from pathlib import Path

from scramble_lab.config import load_config
from scramble_lab.runner import run_experiment

ROOT = Path(__file__).resolve().parents[1]
ORDER = ["purity", "integrable", "spatial", "saturation", "fss"]


def run(name: str):
    cfg = load_config(ROOT / "configs" / "acceptance" / f"{name}.yaml",
                      output_dir=str(ROOT / "runs" / "acceptance" / name))
    t0 = time.time()
    result = run_experiment(cfg, reuse=True)
    logging.info("%s done in %.0f s -> %s", name, time.time() - t0, result.out_dir)
    return result


def main(names):
    os.chdir(ROOT)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for name in names or ORDER:
        run(name)


if __name__ == "__main__":
    main(sys.argv[1:])
