"""Admissible exponent intervals against the dimension-dependent comparison interval.

Usage: python scripts/interval_table.py [--ratios 0.1 0.3 0.5 1 2 3] [--dims 1 3 9 14]
Writes CSV to stdout.
"""

import argparse
import csv
import sys

from lpcontract.criterion import UNBOUNDED, admissible_p_interval, compare_intervals


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.1, 0.3, 0.5, 1 / 2**0.5, 1.0, 2.0, 3.0])
    ap.add_argument("--dims", type=int, nargs="+", default=[1, 2, 3, 4, 8, 9, 14])
    args = ap.parse_args()
    w = csv.writer(sys.stdout)
    w.writerow(["ratio", "p_minus", "p_plus", "d", "comparison_lower", "comparison_upper", "contained"])
    for r in args.ratios:
        pint = admissible_p_interval(r)
        for d in args.dims:
            rep = compare_intervals(pint, d)
            g = rep["growth_bound_zero"]
            w.writerow([f"{r:.6g}", f"{pint.p_minus:.7f}",
                        UNBOUNDED if pint.p_plus is None else f"{pint.p_plus:.7f}",
                        d, g["lower"], g["upper"], rep["contained"]])


if __name__ == "__main__":
    main()
