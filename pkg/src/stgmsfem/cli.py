"""Command-line entry point.

    stgmsfem reproduce --config example1-desk --out runs/ex1
    stgmsfem solve --config my_run.toml --L 1,3,5 --mode cg
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import PRESETS, RunConfig, load_config
from .pipeline import Run, StageError, format_report

COMMANDS = ("velocity", "fine", "snapshots", "basis", "solve", "baseline", "report", "reproduce")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("L values must be positive integers")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stgmsfem", description="Space-time multiscale transport experiments.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", default="example1-desk",
                       help=f"TOML file or preset ({', '.join(sorted(PRESETS))})")
        s.add_argument("--out", type=Path, default=None, help="output directory")
        s.add_argument("--threads", type=int, default=None)
        s.add_argument("--seed", type=int, default=None, help="permeability generator seed")
        s.add_argument("--mode", choices=("cg", "dg"), default=None)
        s.add_argument("--L", type=_int_list, default=None, help="comma-separated basis counts")
        s.add_argument("--no-cache", action="store_true")
    return p


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.threads is not None:
        cfg = cfg.replace(output={"threads": args.threads})
    if args.seed is not None:
        cfg = cfg.replace(velocity={"seed": args.seed})
    if args.mode is not None:
        cfg = cfg.replace(method={"mode": args.mode})
    if args.L is not None:
        cfg = cfg.replace(method={"L": args.L})
    if args.out is not None:
        cfg = cfg.replace(output={"dir": str(args.out)})
    if args.no_cache:
        cfg = cfg.replace(output={"cache": False})
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"stgmsfem: invalid configuration: {exc}", file=sys.stderr)
        return 2
    base = Path(args.config).parent if Path(args.config).exists() else None
    run = Run(cfg, config_base=base)
    try:
        if args.command == "report":
            text = format_report(run.out)
            print(text)
            (run.out / "report.txt").write_text(text)
            return 0
        action = {
            "velocity": run.write_velocity,
            "fine": run.run_fine,
            "snapshots": run.run_snapshots,
            "basis": run.run_basis,
            "solve": run.run_solve,
            "baseline": run.run_baseline,
            "reproduce": run.reproduce,
        }[args.command]
        action()
        run.write_manifest()
    except StageError as exc:
        print(f"stgmsfem: {exc}", file=sys.stderr)
        try:
            run.write_manifest()
        except Exception:  # the manifest is best effort once a stage has failed
            pass
        return 1
    except FileNotFoundError as exc:
        print(f"stgmsfem: {exc}", file=sys.stderr)
        return 1
    if args.command in ("solve", "baseline", "basis", "reproduce"):
        print(format_report(run.out))
    print(f"outputs in {run.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
