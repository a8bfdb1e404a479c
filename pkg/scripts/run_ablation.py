#!/usr/bin/env python3
"""`hgcompute ablate`: none / low_order / high_order variance ratios on clustered points.

Extra arguments are forwarded, e.g. `--seed 0 --out runs/ablate`.
"""
import sys

from hgcompute.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--seed" not in args:
        args = ["--seed", "0", *args]
    sys.exit(main(["ablate", *args]))
