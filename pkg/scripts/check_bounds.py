#!/usr/bin/env python3
"""Check measured convergence against the closed-form bounds for the shipped configs.

Runs the verification pass for each selected config and prints one table
per experiment: measured ergodic quantity vs bound right-hand side at a
set of checkpoints, with the statistical and discretization allowances.
"""

import argparse
import sys
from pathlib import Path

from monozero.experiments import (ExperimentConfig, format_verify_report,
                                  verify_experiment)

ROOT = Path(__file__).resolve().parents[1]
DEFAULT = ["iid_noise", "strong_sde", "bilinear_sde"]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("configs", nargs="*", default=DEFAULT,
                        help=f"config names under configs/ (default: {' '.join(DEFAULT)})")
    parser.add_argument("--threads", type=int, default=2)
    args = parser.parse_args()

    failures = 0
    for name in args.configs:
        path = ROOT / "configs" / f"{name}.json"
        config = ExperimentConfig.load(path)
        rows, code = verify_experiment(config, threads=args.threads)
        print(f"== {name} ==")
        print(format_verify_report(rows))
        print()
        failures += code
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
