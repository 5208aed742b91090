"""Command line entry point: ``perfact <experiment> --config <path> [--out <dir>] [--threads <k>]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, ConfigError, load_config
from .experiments import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="perfact", description="Run a shifted-Schwarz experiment.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="sectioned key = value config file")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--threads", type=int, default=1, help="threads for local subdomain solves")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.experiment)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    failures = run_experiment(cfg, args.out, args.threads)
    if failures:
        print(f"{failures} solver run(s) failed; see empty fields in the CSV output", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
