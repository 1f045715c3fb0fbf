"""``simulate`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, _bp
from .config import parse_config
from .errors import ConfigError, NumericError, ParameterError
from .harness import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

SUBCOMMANDS = {"kernel-bench": "kernel_bench", "losnlos": "losnlos", "ldpc-ber": "ldpc_ber"}

log = logging.getLogger("rffcomm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simulate", description="Run a seeded simulation and write CSV metrics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name, experiment in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {experiment} experiment")
        p.add_argument("--config", required=True, type=Path, help="experiment config file")
        p.add_argument("--seed", type=int, help="override the config's master seed")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
        p.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    return parser


def write_run_meta(path: Path, cfg, command: str) -> None:
    lines = [
        f"artifact = rffcomm {__version__}",
        f"command = {command}",
        f"bp_backend = {_bp.BACKEND}",
        "",
        *cfg.resolved_lines(),
        "",
    ]
    path.write_text("\n".join(lines), encoding="utf-8")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        expected = SUBCOMMANDS[args.command]
        if cfg.experiment != expected:
            raise ConfigError([f"{args.config}: experiment is {cfg.experiment} but subcommand is {args.command}"])
        args.out.mkdir(parents=True, exist_ok=True)
        run_experiment(cfg, args.out)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParameterError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    write_run_meta(args.out / "run.meta", cfg, args.command)
    log.info("wrote results to %s", args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
