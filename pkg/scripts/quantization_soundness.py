"""Grid sup error of floor quantization at the sufficient step, relative to eps.

Samples random networks in the q ball over random small architectures and
records error / eps; any value above one would contradict the certified step.
"""
import argparse
from pathlib import Path

from quantcert.error_eval import sup_norm_gap
from quantcert.network import Architecture, BoxDomain, default_rng, sample_member
from quantcert.quantizer import quantize_floor, sufficient_eta
from quantcert.reports import write_csv

COLUMNS = ("widths", "q", "r", "eps", "eta", "error", "error_over_eps")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/quantization_soundness.csv"))
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    rng = default_rng(args.seed)
    rows = []
    for i in range(args.samples):
        L = int(rng.integers(1, 5))
        arch = Architecture([int(rng.integers(1, 3))] + [int(rng.integers(1, 7)) for _ in range(L)])
        q = ("1", "2", "inf")[i % 3]
        r = float(rng.choice([1.0, 2.0, 4.0]))
        eps = float(rng.choice([0.05, 0.1, 0.5]))
        box = BoxDomain(arch.d_in, 1.0)
        theta = sample_member(arch, q, r, rng)
        plan = sufficient_eta(eps, arch, r, q, box)
        err = sup_norm_gap(theta, quantize_floor(theta, plan.eta), box, q, 64 if arch.d_in == 1 else 32).value
        rows.append({"widths": "-".join(map(str, arch.widths)), "q": q, "r": r, "eps": eps,
                     "eta": plan.eta, "error": err, "error_over_eps": err / eps})
    write_csv(args.out, COLUMNS, rows)
    worst = max(row["error_over_eps"] for row in rows)
    print(f"{len(rows)} networks, max error/eps = {worst:.4f}, violations = "
          f"{sum(row['error_over_eps'] > 1 for row in rows)}")


if __name__ == "__main__":
    main()
