"""Scan t -> I + K(t a0) for a few base fields and report the first real singular scaling."""

import argparse
import sys

from divsolve.config import PRESETS
from divsolve.errors import NoRealSingularScaling
from divsolve.fieldexpr import sample_vector
from divsolve.fredholm import find_singular_scaling
from divsolve.grid import build_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=12)
    ap.add_argument("--t-max", type=float, default=20.0)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("fields", nargs="*", default=["rotation", "centered_rotation", "shear", "odd_shear"])
    args = ap.parse_args()
    g = build_grid(args.n, args.n)
    print(f"{'field':18s} {'t*':>12s} {'sigma_excess':>13s} {'dim_N':>6s}")
    for name in args.fields:
        a0 = sample_vector(*PRESETS[name], g)
        try:
            hit = find_singular_scaling(a0, t_max=args.t_max, steps=args.steps)
        except NoRealSingularScaling as exc:
            print(f"{name:18s} {'none':>12s}   ({exc})")
            continue
        print(f"{name:18s} {hit.t:12.6f} {hit.sigma_excess_ratio:13.3e} {hit.dim_n:6d}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
