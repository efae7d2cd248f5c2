"""Command-line entry point: ``quantcert <command> [options]``.

Exit codes: 0 success or PASS, 2 hypothesis violation, 3 verification FAIL,
4 I/O, schema or usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import encodability as enc
from . import error_eval, lipschitz, quantizer
from .errors import HypothesisViolation, SchemaError, StructuralError
from .network import (
    Architecture,
    BoxDomain,
    NetworkParams,
    NormSpec,
    is_quantized_document,
    network_from_json,
    network_to_json,
    quantized_from_json,
    quantized_to_json,
    smallest_radius,
)
from .reports import read_json, write_csv, write_json

EXIT_OK, EXIT_HYPOTHESIS, EXIT_FAIL, EXIT_IO = 0, 2, 3, 4
DEFAULT_SEED = 42


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- parsing helpers --------------------------------------------------------

def _p_value(text: str) -> float:
    value = float(text)
    if not value >= 1:
        raise argparse.ArgumentTypeError(f"p must be in [1, inf], got {text}")
    return value


def _q_value(text: str) -> NormSpec:
    try:
        return NormSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _load_network(path) -> NetworkParams:
    doc = read_json(path)
    if is_quantized_document(doc):
        return quantized_from_json(doc)[0]
    return network_from_json(doc)


def _box(args, arch: Architecture) -> BoxDomain:
    return BoxDomain(arch.d_in, args.domain_D)


def _radius(args, theta: NetworkParams | None, q) -> float:
    if args.r is not None:
        return args.r
    if theta is None:
        raise UsageError("--r is required without --network")
    return max(1.0, smallest_radius(theta, q))


def _arch(args) -> tuple[Architecture, NetworkParams | None]:
    if args.network is not None:
        theta = _load_network(args.network)
        return theta.arch, theta
    if args.widths is None:
        raise UsageError("one of --network or --widths is required")
    return Architecture(args.widths), None


# -- commands ---------------------------------------------------------------

def cmd_bound(args) -> int:
    arch, theta = _arch(args)
    r = _radius(args, theta, args.q)
    report = lipschitz.lipschitz_bounds(arch, r, args.q, args.p, _box(args, arch))
    write_json(args.out / "bound.json", report.to_json())
    write_csv(args.out / "bound.csv", report.CSV_COLUMNS, [report.csv_row()])
    print(f"upper={report.upper!r} lower={report.lower!r}")
    return EXIT_OK


def _need(args, name: str, flag: str):
    value = getattr(args, name)
    if value is None:
        raise UsageError(f"--mode {args.mode} requires {flag}")
    return value


def cmd_quantize(args) -> int:
    theta = _load_network(args.network)
    arch = theta.arch
    box = _box(args, arch)
    if args.mode == "sufficient":
        plan = quantizer.sufficient_eta(_need(args, "eps", "--eps"), arch,
                                        _radius(args, theta, args.q), args.q, box)
        quantized = quantizer.quantize_floor(theta, plan.eta)
    elif args.mode == "dyadic":
        plan, quantized = quantizer.dyadic_plan(theta, _need(args, "eps", "--eps"), box)
    elif args.mode == "floor":
        eta = _need(args, "eta", "--eta")
        quantized = quantizer.quantize_floor(theta, eta)
        plan = quantizer.QuantizationPlan(eta, math.inf, args.eps, "floor", "manual")
    else:
        eta = _need(args, "eta", "--eta")
        bound = _need(args, "bound", "--bound")
        quantized = quantizer.quantize_nearest_clipped(theta, eta, bound)
        plan = quantizer.QuantizationPlan(eta, bound, args.eps, "nearest", "manual")
    write_json(args.out / "quantized.json", quantized_to_json(quantized, plan.eta, plan.grid_bound))
    write_json(args.out / "plan.json", plan.to_json())
    print(f"eta={plan.eta!r} bits_per_coordinate={plan.bits_per_coordinate}")
    if args.verify:
        return _verify(theta, quantized, plan.epsilon, args)
    return EXIT_OK


def cmd_plan_bits(args) -> int:
    growth = quantizer.bit_growth(args.M_ladder, args.gamma, args.depth_rule, args.radius_rule,
                                  args.q, args.d_in, args.d_out)
    write_csv(args.out / "plan_bits.csv", growth.CSV_COLUMNS, growth.rows)
    doc = growth.to_json() | {"gamma": args.gamma, "depth_rule": args.depth_rule,
                              "radius_rule": args.radius_rule, "q": str(args.q)}
    write_json(args.out / "plan_bits_fit.json", doc)
    print(f"slope={growth.linear[0]!r} normalized_quadratic={growth.normalized_quadratic!r}")
    return EXIT_OK


def cmd_witness(args) -> int:
    arch = Architecture(args.widths)
    box = _box(args, arch)
    x_star = lipschitz.analytic_maximizer(arch, box)
    if args.kind == "pair":
        eps = _need_kind(args, "eps", "--eps")
        pair = (lipschitz.tightness_witness(arch, args.r, eps) if args.lam is None
                else lipschitz.make_witness_pair(arch, args.lam, eps))
        write_json(args.out / "theta.json", network_to_json(pair.theta))
        write_json(args.out / "theta_prime.json", network_to_json(pair.theta_prime))
        doc = {"kind": "pair", "widths": list(arch.widths), "epsilon": eps,
               "lambdas": list(pair.lambdas), "maximizer": x_star.tolist(),
               "analytic_gap": pair.analytic_gap(x_star, args.q),
               "param_distance": pair.param_distance()}
    else:
        eps = _need_kind(args, "eps", "--eps")
        eta = args.eta if args.eta is not None else 2.0 * quantizer.necessary_eta_bound(
            eps, arch, args.r, args.q, box)
        a = args.a if args.a is not None else eta / 4.0
        theta = quantizer.adversarial_witness(arch, args.r, eta, a, args.q)
        quantized = quantizer.quantize_floor(theta, eta)
        plan = quantizer.QuantizationPlan(eta, math.inf, eps, "floor", "adversarial")
        write_json(args.out / "theta.json", network_to_json(theta))
        write_json(args.out / "quantized.json", quantized_to_json(quantized, eta, math.inf))
        write_json(args.out / "plan.json", plan.to_json())
        doc = {"kind": "adversarial", "widths": list(arch.widths), "epsilon": eps, "eta": eta, "a": a,
               "necessary_bound": quantizer.necessary_eta_bound(eps, arch, args.r, args.q, box),
               "maximizer": x_star.tolist(),
               "analytic_error": quantizer.adversarial_error(arch, args.r, eta, a, args.q, box)}
    write_json(args.out / "witness.json", doc)
    print(json.dumps({k: v for k, v in doc.items() if k in ("analytic_gap", "analytic_error")}))
    return EXIT_OK


def _need_kind(args, name, flag):
    value = getattr(args, name)
    if value is None:
        raise UsageError(f"--kind {args.kind} requires {flag}")
    return value


def _verify(theta: NetworkParams, other: NetworkParams, eps, args) -> int:
    if eps is None:
        raise UsageError("no error target: pass --eps or a plan with an epsilon")
    box = _box(args, theta.arch)
    if theta.arch != other.arch:
        raise StructuralError(f"architecture mismatch: {theta.arch.widths} vs {other.arch.widths}")
    include = lipschitz.analytic_maximizer(theta.arch, box)[None, :]
    if math.isinf(args.p):
        est = error_eval.sup_norm_gap(theta, other, box, args.q, args.resolution, include=include)
    else:
        est = error_eval.lp_norm_gap(theta, other, box, args.p, args.q, args.samples, args.seed)
    passed = est.value <= eps
    doc = {"verdict": "PASS" if passed else "FAIL", "epsilon": eps, "estimate": est.to_json(),
           "note": "the estimate is a lower bound of the true norm, so PASS is necessary "
                   "but not sufficient for the certified claim"}
    write_json(args.out / "verify.json", doc)
    write_csv(args.out / "verify.csv", error_eval.NormEstimate.CSV_COLUMNS, [est.csv_row()])
    print(f"{doc['verdict']} measured={est.value!r} epsilon={eps!r}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_verify(args) -> int:
    theta = _load_network(args.network)
    other = _load_network(args.quantized)
    eps = args.eps
    if eps is None and args.plan is not None:
        eps = quantizer.QuantizationPlan.from_json(read_json(args.plan)).epsilon
    return _verify(theta, other, eps, args)


def cmd_covering(args) -> int:
    rows, columns = [], None
    if args.kind == "ball":
        rep = enc.ball_entropy_bounds(args.n, args.r, args.eps, args.q)
        rows = [rep.to_json()]
    elif args.kind == "lip-image":
        rep, _ = enc.lip_image_covering(args.n, args.r, args.q, args.lip, args.gamma, args.M)
        rows = [rep.to_json()]
    elif args.kind == "brute-ball":
        points = enc.ball_points(args.n, args.r, args.eps / 10.0, args.q)
        rep, _ = enc.brute_force_cover(points, args.eps, args.q)
        formula = enc.ball_entropy_bounds(args.n, args.r, args.eps, args.q)
        rows = [rep.to_json(), formula.to_json()]
    else:
        depth = quantizer.parse_rule(args.depth_rule, "depth")
        radius = quantizer.parse_rule(args.radius_rule, "radius")
        columns = ("M", "L_M", "r_M", "arch_bits", "support_bits", "grid_bits", "total_bits",
                   "ratio_to_M_pow_1_plus_h")
        table = []
        for M in args.M_ladder:
            spec = enc.FamilySpec(M, int(depth(M)), radius(M), args.q, args.d_in, args.d_out, args.gamma)
            rep = enc.relu_family_encoding_size(spec)
            rows.append(rep.to_json())
            table.append({"M": M, "L_M": spec.L_M, "r_M": spec.r_M, **rep.terms,
                          "ratio_to_M_pow_1_plus_h": rep.terms["total_bits"] / M ** (1 + args.h)})
        write_csv(args.out / "covering.csv", columns, table)
    write_json(args.out / "covering.json", {"kind": args.kind, "reports": rows,
                                            "note": "finite ladders corroborate, not prove, asymptotic claims"})
    if columns is None:
        flat = [{"construction": r["construction"], "eps": r["eps"],
                 "log2_size_lower": r["log2_size_lower"], "log2_size_upper": r["log2_size_upper"]}
                for r in rows]
        write_csv(args.out / "covering.csv", ("construction", "eps", "log2_size_lower", "log2_size_upper"), flat)
    print(json.dumps(rows[0]["log2_size_upper"]))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quantcert", description="Certified uniform quantization of ReLU networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, q_default="inf"):
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--q", type=_q_value, default=NormSpec.parse(q_default),
                       help="norm: 1, 2, inf, fro or max")

    def net_source(p):
        p.add_argument("--network", type=Path, help="network JSON (plain or quantized)")
        p.add_argument("--widths", type=_int_list, help="bare architecture, e.g. 1,5,5,1")

    p = sub.add_parser("bound", help="Lipschitz upper/lower bounds")
    common(p)
    net_source(p)
    p.add_argument("--r", type=float)
    p.add_argument("--p", type=_p_value, default=math.inf)
    p.add_argument("--domain-D", dest="domain_D", type=float, default=1.0)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("quantize", help="quantize a network")
    common(p)
    p.add_argument("--network", type=Path, required=True)
    p.add_argument("--mode", choices=("sufficient", "dyadic", "floor", "nearest"), default="sufficient")
    p.add_argument("--eps", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--bound", type=float, help="clipping bound for --mode nearest")
    p.add_argument("--r", type=float)
    p.add_argument("--domain-D", dest="domain_D", type=float, default=1.0)
    p.add_argument("--verify", action="store_true", help="run verify on the result")
    p.add_argument("--p", type=_p_value, default=math.inf)
    p.add_argument("--resolution", type=int, default=65)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("plan-bits", help="bits per coordinate along a ladder of M")
    common(p, "2")
    p.add_argument("--M-ladder", dest="M_ladder", type=_int_list, default=[2 ** i for i in range(1, 11)])
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--depth-rule", default="const:3", help="const:K or log2")
    p.add_argument("--radius-rule", default="M", help="const:R, M or poly:a")
    p.add_argument("--d-in", dest="d_in", type=int, default=1)
    p.add_argument("--d-out", dest="d_out", type=int, default=1)
    p.set_defaults(func=cmd_plan_bits)

    p = sub.add_parser("witness", help="write a witness network")
    common(p)
    p.add_argument("--kind", choices=("pair", "adversarial"), default="pair")
    p.add_argument("--widths", type=_int_list, required=True)
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--eps", type=float)
    p.add_argument("--lam", type=float, help="common scale of the pair (default r/(1+eps))")
    p.add_argument("--eta", type=float, help="step (default twice the necessary bound)")
    p.add_argument("--a", type=float, help="offset in (0, eta) (default eta/4)")
    p.add_argument("--domain-D", dest="domain_D", type=float, default=1.0)
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("verify", help="measure the realization gap against a target")
    common(p)
    p.add_argument("--network", type=Path, required=True)
    p.add_argument("--quantized", type=Path, required=True)
    p.add_argument("--plan", type=Path)
    p.add_argument("--eps", type=float)
    p.add_argument("--p", type=_p_value, default=math.inf)
    p.add_argument("--domain-D", dest="domain_D", type=float, default=1.0)
    p.add_argument("--resolution", type=int, default=65)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("covering", help="covering-number bounds")
    common(p)
    p.add_argument("--kind", choices=("ball", "lip-image", "relu-family", "brute-ball"), default="ball")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--lip", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--M", type=int, default=2)
    p.add_argument("--M-ladder", dest="M_ladder", type=_int_list, default=[2 ** i for i in range(1, 9)])
    p.add_argument("--h", type=float, default=0.5)
    p.add_argument("--depth-rule", default="log2")
    p.add_argument("--radius-rule", default="M")
    p.add_argument("--d-in", dest="d_in", type=int, default=1)
    p.add_argument("--d-out", dest="d_out", type=int, default=1)
    p.set_defaults(func=cmd_covering)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (SchemaError, StructuralError, json.JSONDecodeError) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
