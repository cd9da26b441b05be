"""Command line entry point: ``scramble-lab <experiment> --config FILE``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, load_config
from .runner import run_experiment


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scramble-lab", description=__doc__)
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="YAML experiment file")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--workers", type=int, help="parallel trajectory workers")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--reuse", action="store_true",
                    help="reuse saved trajectory records whose config fingerprint matches")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    config = load_config(
        args.config,
        experiment=args.experiment,
        master_seed=args.seed,
        workers=args.workers,
        output_dir=args.out,
    )
    result = run_experiment(config, reuse=args.reuse)
    for name in sorted(result.outputs):
        print(result.out_dir / name)
    if result.fss is not None:
        f = result.fss
        print(f"best p_c={f.best_pc:g} nu={f.best_nu:g} R2={f.best_r2:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
