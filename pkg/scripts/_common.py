"""Argument handling shared by the experiment scripts."""
import argparse
import logging
import os
from pathlib import Path

from scramble_lab.config import load_config
from scramble_lab.runner import run_experiment

ROOT = Path(__file__).resolve().parents[1]


def run_from_args(default_config: str, description: str):
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--config", default=str(ROOT / "configs" / default_config))
    ap.add_argument("--out", help="output directory (default runs/<config name>)")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--fresh", action="store_true", help="ignore saved trajectory records")
    args = ap.parse_args()
    os.chdir(ROOT)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    out = args.out or str(ROOT / "runs" / Path(args.config).stem)
    cfg = load_config(args.config, output_dir=out, workers=args.workers, master_seed=args.seed)
    return run_experiment(cfg, reuse=not args.fresh)
