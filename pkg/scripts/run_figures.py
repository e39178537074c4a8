#!/usr/bin/env python3
"""Run both reference plans and write CSV/SVG pairs into an output directory.

Usage:
    python scripts/run_figures.py [OUTDIR] [--threads N]
"""

import argparse
from pathlib import Path

from sps_scalar import cli

PLANS = Path(__file__).parent / "plans"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("outdir", nargs="?", default="results")
    parser.add_argument("--threads", type=int, default=4)
    args = parser.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("constant_regressors", "gaussian_regressors"):
        code = cli.main(["simulate", str(PLANS / f"{name}.plan"), "--threads", str(args.threads),
                         "--csv", str(out / f"{name}.csv"), "--svg", str(out / f"{name}.svg")])
        if code:
            raise SystemExit(code)
        print(f"wrote {out / name}.csv and .svg")


if __name__ == "__main__":
    main()
