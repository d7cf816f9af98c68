"""Dissipativity gaps of fixed smooth probes under grid refinement.

For the antisymmetric family c = I + bJ this prints, per exponent, the gap
floor at n = 16, 32, 64 and how fast the gaps settle. Positive floors that
change by ~4x per halving mean the discrete gaps converge at O(h^2).
"""

import argparse
import json
import math

from lpcontract.criterion import admissible_p_interval, refinement_study
from lpcontract.forms import make_coefficients
from lpcontract.spaces import Grid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--b", type=float, default=1.0)
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--probes", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--p", type=float, nargs="*", default=None)
    args = ap.parse_args()

    pint = admissible_p_interval(1 / math.sqrt(1 + args.b**2))
    ps = args.p or [pint.p_minus, 2.0] + ([pint.p_plus] if pint.p_plus else [])
    grids = [Grid.uniform(args.d, n + 1) for n in (16, 32, 64)]
    for p in ps:
        study = refinement_study(lambda g: make_coefficients("antisymmetric", g, args.m, b=args.b),
                                 grids, p, args.probes, args.seed, args.m)
        out = study.to_dict()
        out["change_ratios"] = study.change_ratios()
        print(json.dumps(out))


if __name__ == "__main__":
    main()
