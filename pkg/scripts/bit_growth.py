"""Bits per coordinate of the speed-preserving step along a ladder of M.

Writes one CSV per depth regime plus the fitted growth coefficients.
"""
import argparse
from pathlib import Path

from quantcert.quantizer import bit_growth
from quantcert.reports import write_csv, write_json

REGIMES = {"constant_depth": "const:3", "log_depth": "log2"}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/bit_growth"))
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--max-exponent", type=int, default=14)
    ap.add_argument("--q", default="2")
    args = ap.parse_args()

    ladder = [2 ** i for i in range(1, args.max_exponent + 1)]
    summary = {}
    for name, rule in REGIMES.items():
        growth = bit_growth(ladder, args.gamma, rule, "M", args.q)
        write_csv(args.out / f"{name}.csv", growth.CSV_COLUMNS, growth.rows)
        summary[name] = growth.to_json() | {"depth_rule": rule}
        print(f"{name:15s} slope={growth.linear[0]:.3f} normalized_quadratic={growth.normalized_quadratic:.4f} "
              f"bits/log2(M)^2 last={growth.ratio_log2_squared[-1]:.3f}")
    write_json(args.out / "fits.json", summary)


if __name__ == "__main__":
    main()
