"""Command line interface: ``heatlab run [--config FILE] [--out FILE] ...``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import SCENARIOS, RunConfig, load_config, parse_levels
from .errors import ParseError, ValidationError

EXIT_CONFIG = 2


def _apply_thread_cap() -> None:
    # must run before numpy loads its BLAS
    n = os.environ.get("HEATLAB_THREADS")
    if n:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatlab", description="Refinement studies of discrete heat semigroup constants.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run scenarios and write a CSV table")
    r.add_argument("--config", help="configuration file")
    r.add_argument("--out", help="CSV output path")
    r.add_argument("--scenario", action="append", choices=SCENARIOS, help="scenario to run (repeatable)")
    r.add_argument("--levels", help="level range such as 3..5")
    r.add_argument("--domain", choices=("square", "lshape"), action="append", help="domain (repeatable)")
    r.add_argument("--seed", type=int)
    r.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args) -> RunConfig:
    """Flags override the config file, which overrides defaults."""
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(
        scenarios=tuple(args.scenario) if args.scenario else None,
        levels=parse_levels(args.levels) if args.levels else None,
        domains=tuple(args.domain) if args.domain else None,
        seed=args.seed,
        output=args.out,
    )


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
    except (ParseError, ValidationError) as exc:
        print(f"heatlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"heatlab: cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .runner import run

    result = run(cfg, stream=sys.stdout)
    print(f"wrote {len(result.rows)} rows to {cfg.output}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
