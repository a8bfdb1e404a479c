#!/usr/bin/env python3
"""`hgcompute verify`: seeded property suite; pass --inject-fault to see a failing run.

Extra arguments are forwarded, e.g. `--seed 0 --out runs/verify`.
"""
import sys

from hgcompute.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--seed" not in args:
        args = ["--seed", "0", *args]
    sys.exit(main(["verify", *args]))
