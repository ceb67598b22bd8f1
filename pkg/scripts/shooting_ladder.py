#!/usr/bin/env python3
"""Positivity humps of the d = 3 shooting solutions over a range of a."""
import argparse

import numpy as np

from pkslab.selfsim import find_ac, positivity_components, profile_support, shoot


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--a-min", type=float, default=2.0)
    ap.add_argument("--a-max", type=float, default=120.0)
    ap.add_argument("--num", type=int, default=25)
    ap.add_argument("--d", type=int, default=3)
    args = ap.parse_args()
    cs = find_ac(args.d)
    print(f"a_c = {cs.a_c:.7f} ({cs.orientation}), bracket {cs.bracket}")
    print(f"{'a':>8} {'humps':>6} {'with tail':>9} {'first zero':>11}")
    for a in np.geomspace(args.a_min, args.a_max, args.num):
        tr = shoot(a, args.d)
        z = profile_support(tr)
        print(f"{a:8.3f} {positivity_components(tr):6d} {positivity_components(tr, closed_only=False):9d} "
              f"{'-' if z is None else f'{z:.6f}':>11}")


if __name__ == "__main__":
    main()
