"""Search for negative dissipativity gaps across exponents.

For the scalar coefficient 1 + ib the exact contractive range is
|p - 2| |b| <= 2 sqrt(p - 1), so with b = 1 violations should appear only
beyond p = 4 + 2 sqrt 2 ~ 6.83. The sufficient interval from mu/M is much
narrower; the gap between the two is the point of this script.
"""

import argparse
import math

from lpcontract.criterion import admissible_p_interval, search_counterexample
from lpcontract.forms import ellipticity_constants, make_coefficients
from lpcontract.spaces import Grid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--b", type=float, default=1.0)
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--n", type=int, default=65)
    ap.add_argument("--budget", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--p", type=float, nargs="+", default=[2.0, 3.0, 5.0, 6.5, 7.0, 8.0, 10.0, 20.0, 50.0])
    args = ap.parse_args()

    c = make_coefficients("antisymmetric", Grid((args.n,)), args.m, b=args.b)
    pint = admissible_p_interval(ellipticity_constants(c))
    print(f"# sufficient interval [{pint.p_minus:.4f}, {pint.p_plus}]")
    if args.m == 1:
        # largest p with |p-2| b <= 2 sqrt(p-1): b^2 (p-2)^2 = 4 (p-1)
        b2 = args.b**2
        p_exact = ((4 * b2 + 4) + math.sqrt((4 * b2 + 4) ** 2 - 4 * b2 * (4 * b2 + 4))) / (2 * b2)
        print(f"# exact scalar threshold p = {p_exact:.4f}")
    print("p,best_gap,evaluations,inside_sufficient")
    for p in args.p:
        res = search_counterexample(c, p, args.budget, args.seed)
        print(f"{p},{res.best_gap:.6e},{res.evaluations},{p in pint}")


if __name__ == "__main__":
    main()
