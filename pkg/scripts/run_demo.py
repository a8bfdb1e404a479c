#!/usr/bin/env python3
"""`hgcompute demo`: backbone and neck on noise or a PGM/PPM image, with heatmaps.

Extra arguments are forwarded, e.g. `--seed 0 --out runs/demo`.
"""
import sys

from hgcompute.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--seed" not in args:
        args = ["--seed", "0", *args]
    sys.exit(main(["demo", *args]))
