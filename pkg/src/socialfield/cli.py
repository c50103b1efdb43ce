"""Command-line entry point: ``socialfield <mode> [--config FILE] ...``."""
from __future__ import annotations

import argparse
import logging
import sys

from .abm import BlowUpError
from .config import MODES, ConfigError, build
from .experiments import execute
from .pde import StabilityError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_STABILITY = 4

log = logging.getLogger("socialfield")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="socialfield", description=__doc__)
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", help="key = value config file")
    ap.add_argument("--output", default="out", help="output directory (default: out)")
    ap.add_argument("--seed", type=int, help="override the config seed (u64)")
    ap.add_argument("--threads", type=int, default=1, help="ensemble worker threads")
    ap.add_argument("--format", dest="formats", help="comma list from csv,ndjson,svg")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = build(
            args.mode,
            path=args.config,
            output_dir=args.output,
            seed=args.seed,
            threads=args.threads,
            formats=args.formats,
        )
        manifest = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except StabilityError as exc:
        print(f"stability refusal: {exc}", file=sys.stderr)
        return EXIT_STABILITY
    log.info("wrote %s", manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
