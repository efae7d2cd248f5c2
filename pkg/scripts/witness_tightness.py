"""Measured Lipschitz ratio of the witness pairs against the upper and lower bounds.

For each depth and each eps the pair sits in the q ball of radius r; the
ratio gap / parameter distance approaches the lower bound as eps -> 0.
"""
import argparse
import math
from pathlib import Path

import numpy as np

from quantcert.error_eval import sup_norm_gap
from quantcert.lipschitz import analytic_maximizer, lipschitz_lower, lipschitz_upper, tightness_witness
from quantcert.network import Architecture, BoxDomain
from quantcert.reports import write_csv

COLUMNS = ("L", "W", "q", "r", "eps", "measured_ratio", "lower", "upper")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/witness_tightness.csv"))
    ap.add_argument("--r", type=float, default=2.0)
    ap.add_argument("--width", type=int, default=3)
    ap.add_argument("--d-in", type=int, default=2)
    args = ap.parse_args()

    rows = []
    for L in range(1, 7):
        arch = Architecture((args.d_in,) + (args.width,) * (L - 1) + (1,))
        box = BoxDomain(arch.d_in, 1.0)
        x_star = analytic_maximizer(arch, box)[None]
        for q in ("1", "2", "inf"):
            lower = lipschitz_lower(arch, args.r, q, math.inf, box)
            upper = lipschitz_upper(arch, args.r, q, math.inf, box)
            for eps in np.geomspace(1.0, 1e-4, 5):
                pair = tightness_witness(arch, args.r, float(eps))
                gap = sup_norm_gap(pair.theta, pair.theta_prime, box, q, 9, include=x_star).value
                rows.append({"L": L, "W": arch.width(), "q": q, "r": args.r, "eps": float(eps),
                             "measured_ratio": gap / pair.param_distance(), "lower": lower, "upper": upper})
    write_csv(args.out, COLUMNS, rows)
    for row in rows[4::5]:
        print(f"L={row['L']} q={row['q']:>3s} ratio(eps=1e-4)={row['measured_ratio']:.3f} "
              f"lower={row['lower']:.3f} upper={row['upper']:.3f}")


if __name__ == "__main__":
    main()
