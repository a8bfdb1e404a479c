#!/usr/bin/env python3
"""`hgcompute bench`: kernel timings as CSV.

Extra arguments are forwarded, e.g. `--seed 0 --out runs/bench`.
"""
import sys

from hgcompute.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--seed" not in args:
        args = ["--seed", "0", *args]
    sys.exit(main(["bench", *args]))
