"""Command-line experiment runner.

Usage: graphvb --config experiment.json [--output-dir DIR] [--seeds 1,2,3]
               [--max-parallelism N] [--log-level LEVEL]

Exit status is 0 only when every experiment cell completed successfully.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError
from .experiment import emit_report, load_config, override_seeds, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphvb",
        description="Recover graph signals from partial noisy samples while "
                    "jointly estimating the graph topology and noise level.",
    )
    parser.add_argument("--config", required=True, help="path to the JSON experiment config")
    parser.add_argument("--output-dir", default=None,
                        help="override the config's output directory")
    parser.add_argument("--seeds", default=None,
                        help="comma-separated seed override, e.g. 0,1,2")
    parser.add_argument("--max-parallelism", type=int, default=1,
                        help="number of experiment cells to run concurrently")
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        if args.seeds is not None:
            try:
                seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
            except ValueError as exc:
                raise ConfigError(f"--seeds must be comma-separated integers: {exc}") from exc
            if not seeds:
                raise ConfigError("--seeds override is empty")
            config = override_seeds(config, seeds)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    output_dir = args.output_dir if args.output_dir is not None else config.output_dir
    rows = run_experiment(config, max_parallelism=max(1, args.max_parallelism))
    emit_report(rows, output_dir)

    failed = [r for r in rows if r.status != "ok"]
    for row in failed:
        print(f"cell M={row.M} omega={row.omega} P={row.harary_p} K={row.K} "
              f"seed={row.seed}: {row.status}", file=sys.stderr)
    print(f"{len(rows) - len(failed)}/{len(rows)} cells succeeded; "
          f"results in {output_dir}")
    return 0 if not failed else 1


if __name__ == "__main__":
    sys.exit(main())
