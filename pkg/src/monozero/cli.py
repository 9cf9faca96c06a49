"""Command-line entry point.

Subcommands:
  run            execute an experiment config, write ensemble CSVs + manifest
  verify         re-run the config and check measured values against the bounds
  plot           render ensemble CSVs as an SVG convergence plot
  list-problems  show the built-in problems

Exit codes: 0 success, 1 runtime failure (divergence, failed check),
2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from monozero.errors import ConfigError
from monozero.experiments import (PROBLEMS, ExperimentConfig,
                                  format_verify_report, plot_ensembles,
                                  run_experiment, verify_experiment)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monozero",
        description="Monte-Carlo experiments for stochastic monotone-equation methods",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run all (method x replica) cells of a config")
    p_run.add_argument("--config", required=True, help="path to the JSON experiment config")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--threads", type=int, default=1, help="replica worker processes")
    p_run.add_argument("--seed-override", type=int, default=None,
                       help="replace the config's master seed")

    p_ver = sub.add_parser("verify", help="check measured values against the bounds")
    p_ver.add_argument("--config", required=True)
    p_ver.add_argument("--threads", type=int, default=1)
    p_ver.add_argument("--seed-override", type=int, default=None)

    p_plot = sub.add_parser("plot", help="plot ensemble CSVs to an SVG")
    p_plot.add_argument("csvs", nargs="+", help="ensemble CSV files from 'run'")
    p_plot.add_argument("--metric", default="ergodic_norm_M_sq",
                        help="metric column to plot (default: ergodic_norm_M_sq)")
    p_plot.add_argument("--out", required=True, help="output SVG path")

    sub.add_parser("list-problems", help="list built-in problems")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = ExperimentConfig.load(args.config)
            manifest, code = run_experiment(config, args.out, threads=args.threads,
                                            seed_override=args.seed_override)
            for name in manifest["artifacts"]:
                print(f"wrote {args.out}/{name}")
            print(f"wrote {args.out}/manifest.json")
            if code != 0:
                failed = [c for c in manifest["cells"] if c["status"] != "ok"]
                print(f"{len(failed)} cell(s) failed; see manifest", file=sys.stderr)
            return code
        if args.command == "verify":
            config = ExperimentConfig.load(args.config)
            rows, code = verify_experiment(config, threads=args.threads,
                                           seed_override=args.seed_override)
            print(format_verify_report(rows))
            print(f"{sum(r['passed'] for r in rows)}/{len(rows)} checks passed")
            return code
        if args.command == "plot":
            try:
                plot_ensembles(args.csvs, args.metric, args.out)
            except (ValueError, OSError) as exc:
                print(f"plot failed: {exc}", file=sys.stderr)
                return 1
            print(f"wrote {args.out}")
            return 0
        if args.command == "list-problems":
            for name in sorted(PROBLEMS):
                print(f"{name:<18} {PROBLEMS[name]}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
