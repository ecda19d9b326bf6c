"""Run both desk-scale examples and print their error tables.

Example 2 differs from Example 1 only in the initial and inflow data, so it
reuses Example 1's mesh, velocity and offline library.

    python scripts/run_desk_examples.py --out runs/desk
"""
import argparse
import time
from pathlib import Path

from stgmsfem.config import preset
from stgmsfem.pipeline import Run, format_report


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/desk"))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--full-scale", action="store_true", help="use the 100 x 100 fine-grid presets")
    args = p.parse_args()

    scale = "full" if args.full_scale else "desk"
    first = None
    for example in ("example1", "example2"):
        cfg = preset(f"{example}-{scale}").replace(output={"threads": args.threads})
        run = Run(cfg, out=args.out / example)
        if first is not None:
            run.mesh, run.kappa, run.velocity, run.library = first.mesh, first.kappa, first.velocity, first.library
        t0 = time.perf_counter()
        run.reproduce()
        print(f"== {cfg.name} ({time.perf_counter() - t0:.0f} s, outputs in {run.out})")
        print(format_report(run.out))
        first = first or run


if __name__ == "__main__":
    main()
