#!/usr/bin/env python3
"""`hgcompute fit`: gradient descent on theta, loss trace as CSV.

Extra arguments are forwarded, e.g. `--seed 0 --out runs/fit`.
"""
import sys

from hgcompute.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--seed" not in args:
        args = ["--seed", "0", *args]
    sys.exit(main(["fit", *args]))
