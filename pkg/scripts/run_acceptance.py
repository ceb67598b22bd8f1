#!/usr/bin/env python3
"""Run acceptance criteria and print one line per criterion.

    python scripts/run_acceptance.py            # all
    python scripts/run_acceptance.py 1 6 9      # a subset
    python scripts/run_acceptance.py --out runs/acceptance
"""
import argparse
import os
import sys

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

from pkslab.acceptance import CRITERIA, run_criterion  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("numbers", nargs="*", type=int)
    ap.add_argument("--out", default=None, help="keep bundles under this directory")
    args = ap.parse_args()
    numbers = args.numbers or [c.number for c in CRITERIA]
    gating_failures = 0
    for k in numbers:
        res = run_criterion(k, args.out)
        print(res.line(), flush=True)
        gating_failures += (not res.passed) and res.criterion.gating
    return 1 if gating_failures else 0


if __name__ == "__main__":
    sys.exit(main())
