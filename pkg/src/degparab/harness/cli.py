"""Command line entry point: ``degparab <subcommand> [--config PATH] ...``.

Exit codes: 0 on success, 1 when a solver fails (partial results are still
written), 2 for configuration or usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import ConfigError, default_config, load_config
from .output import write_result
from .studies import StudyFailure, run_study

logger = logging.getLogger(__name__)

# subcommand -> study kinds it accepts (the first is the default)
SUBCOMMANDS = {
    "porous-convergence": ("porous-convergence",),
    "iterations": ("porous-iterations", "sulfation-iterations"),
    "sulfation-profile": ("sulfation-profile",),
    "front": ("sulfation-front",),
    "sulfation-2d": ("sulfation-2d",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="degparab",
        description="Newton-GMRES-multigrid experiments for degenerate parabolic problems.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True
    for name, kinds in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run a {' / '.join(kinds)} study")
        p.add_argument("--config", help="INI file; defaults are used when omitted")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--format", choices=("csv", "json"), help="output format")
        p.add_argument("--quiet", action="store_true", help="only report errors")
        if name == "iterations":
            p.add_argument("--model", choices=("porous", "sulfation"),
                           help="model for the default config (ignored with --config)")
    return parser


def _resolve_config(args):
    kinds = SUBCOMMANDS[args.command]
    if args.config:
        cfg = load_config(args.config)
        if cfg.kind not in kinds:
            raise ConfigError(f"study kind {cfg.kind!r} does not match subcommand "
                              f"{args.command!r} (expected {' or '.join(kinds)})", "kind")
    else:
        kind = kinds[0]
        if getattr(args, "model", None) == "sulfation":
            kind = "sulfation-iterations"
        cfg = default_config(kind)
    overrides = {}
    if args.out:
        overrides["out"] = args.out
    if args.format:
        overrides["format"] = args.format
    return dataclasses.replace(cfg, **overrides).validate() if overrides else cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_study(cfg)
    except StudyFailure as exc:
        paths = write_result(exc.result, cfg.out, cfg.format)
        print(f"solver failure: {exc}", file=sys.stderr)
        print(f"partial results in {', '.join(str(p) for p in paths)}", file=sys.stderr)
        return 1
    paths = write_result(result, cfg.out, cfg.format)
    if not args.quiet:
        for key, value in result.summary.items():
            print(f"{key} = {value}")
        for p in paths:
            print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
