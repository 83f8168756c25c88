"""Count singular values of K above fixed fractions of sigma_1 as the grid is refined.

Writes decay_study.csv (field, n, threshold, count) next to the requested output path.
"""

import argparse
import csv
import sys

from divsolve.config import PRESETS
from divsolve.fieldexpr import sample_vector
from divsolve.grid import build_grid
from divsolve.perturbation import PerturbedOperator, singular_decay_report

THRESHOLDS = (1e-1, 1e-2, 1e-3)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 12, 16, 24])
    ap.add_argument("--fields", nargs="+", default=["rotation", "shear", "odd_shear"])
    ap.add_argument("--csv", default="decay_study.csv")
    args = ap.parse_args()
    rows = []
    for name in args.fields:
        counts = []
        for n in args.sizes:
            g = build_grid(n, n)
            rep = singular_decay_report(PerturbedOperator(g, sample_vector(*PRESETS[name], g)), THRESHOLDS)
            counts.append(rep.counts)
            rows += [(name, n, t, c) for t, c in zip(THRESHOLDS, rep.counts)]
        print(name)
        for n, c in zip(args.sizes, counts):
            print(f"  n = {n:3d} cells = {n * n:5d}  " + "  ".join(f"N({t:g}) = {k:4d}" for t, k in zip(THRESHOLDS, c)))
    with open(args.csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["field", "n", "threshold", "count"])
        w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
