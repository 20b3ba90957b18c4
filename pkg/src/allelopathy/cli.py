"""Command-line entry point.

Exit status: 0 success, 2 config error, 3 invariant violation, 4 resource cap,
5 acceptance criterion failed.
"""
from __future__ import annotations

import argparse
import sys

from .config import ExperimentConfig
from .engine import InvariantViolation, ResourceCapError
from .lattice import ConfigError
from .parallel import default_workers

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_RESOURCE, EXIT_ACCEPT = 0, 2, 3, 4, 5

SUBCOMMANDS = {
    "simulate": ("simulate",),
    "meanfield": ("meanfield",),
    "basin": ("basin",),
    "sweep": ("sweep-gamma", "sweep-beta"),
    "couple": ("gbt-couple", "mono-couple"),
    "dual": ("duality-check", "ancestor-check"),
    "perc": ("percolation",),
}


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="allelopathy", description="Allelopathy model experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, kinds in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run a config of kind {' or '.join(kinds)}")
        p.add_argument("--config", required=True, help="INI experiment file")
        p.add_argument("--seed", type=_u64, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--workers", type=int, default=None, help="worker processes (default: all CPUs)")
        p.add_argument("--format", choices=("csv", "ppm"), default="csv")
    p = sub.add_parser("accept", help="run the acceptance criteria")
    p.add_argument("--only", default="", help="comma separated criterion numbers (default: all)")
    p.add_argument("--seed", type=_u64, default=None, help="base seed (default: the frozen one)")
    p.add_argument("--out", help="directory for the per-criterion report")
    p.add_argument("--workers", type=int, default=None)
    return ap


def _run_accept(args) -> int:
    from .acceptance import run_all
    only = [int(v) for v in args.only.split(",") if v.strip()] or None
    results = run_all(only=only, workers=args.workers or default_workers(), out_dir=args.out,
                      seed=args.seed)
    for r in results:
        print(r.line(), flush=True)
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPT


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "accept":
            return _run_accept(args)
        from .harness import run
        cfg = ExperimentConfig.load(args.config)
        if cfg.kind not in SUBCOMMANDS[args.command]:
            raise ConfigError(f"subcommand {args.command!r} runs kinds "
                              f"{', '.join(SUBCOMMANDS[args.command])}; config has {cfg.kind!r}")
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        manifest = run(cfg, out_dir=args.out, workers=args.workers or default_workers(),
                       fmt=args.format)
        print(f"{manifest['status']}: {len(manifest['outputs'])} file(s) in {args.out or cfg.out_dir}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
