"""Acceptance criteria 1-9, each reported as one PASS/FAIL line in the terminal summary."""
import math
import os
import subprocess
import sys
import time

import numpy as np

from quantcert.encodability import FamilySpec, ball_entropy_bounds, ball_points, brute_force_cover
from quantcert.error_eval import gap_at, sup_norm_gap
from quantcert.lipschitz import analytic_maximizer, make_witness_pair, telescoping_bound
from quantcert.network import (
    Architecture,
    BoxDomain,
    NetworkParams,
    default_rng,
    dim_power,
    param_set_membership,
    realize_batch,
    sample_member,
    vector_norms,
)
from quantcert.quantizer import (
    adversarial_error,
    adversarial_witness,
    family_covering_check,
    necessary_eta_bound,
    dyadic_plan,
    quantize_floor,
    sufficient_eta,
)
from quantcert.reports import read_json


def record(log, number, ok, elapsed, limit, detail):
    in_time = limit is None or elapsed < limit
    verdict = "PASS" if ok and in_time else "FAIL"
    budget = "" if limit is None else f" / {limit:g} s"
    log.append(f"criterion {number}: {verdict}  {detail}  [{elapsed:.2f} s{budget}]")
    assert ok, detail
    assert in_time, f"runtime {elapsed:.2f} s exceeds {limit} s"


def random_architecture(rng, max_depth, max_width, max_in):
    L = int(rng.integers(1, max_depth + 1))
    widths = [int(rng.integers(1, max_in + 1))]
    widths += [int(rng.integers(1, max_width + 1)) for _ in range(L)]
    return Architecture(widths)


def resolution_for(d):
    return 64 if d == 1 else 32


# 1 -------------------------------------------------------------------------

def width_patterns(L):
    square = (3,) * (L + 1)
    mixed = tuple((2, 4, 3, 5, 1, 2, 3)[i % 7] for i in range(L + 1))
    return square, mixed


def test_criterion_1_equality_case(acceptance_log):
    start = time.perf_counter()
    r, worst, cases = 2.0, 0.0, 0
    for L in (1, 2, 3, 4, 6):
        for widths in width_patterns(L):
            arch = Architecture(widths)
            box = BoxDomain(arch.d_in, 1.0)
            x_star = analytic_maximizer(arch, box)
            for eps in (0.1, 1.0):
                for lam in (1.0, r / (1 + eps)):
                    pair = make_witness_pair(arch, lam, eps)
                    for q in ("1", "2", "inf"):
                        measured = gap_at(pair.theta, pair.theta_prime, x_star, q).value
                        grid = sup_norm_gap(pair.theta, pair.theta_prime, box, q, 2,
                                            include=x_star[None]).value
                        exact = ((1 + eps) ** L - 1) * lam ** L * np.linalg.norm(
                            x_star, ord={"1": 1, "2": 2, "inf": np.inf}[q])
                        for value in (measured, grid, pair.analytic_gap(x_star, q)):
                            worst = max(worst, abs(value - exact) / exact)
                        cases += 1
    record(acceptance_log, 1, worst <= 1e-9, time.perf_counter() - start, 5.0,
           f"{cases} witness cases, max relative deviation {worst:.2e}")


# 2 -------------------------------------------------------------------------

def test_criterion_2_telescoping(acceptance_log):
    start = time.perf_counter()
    rng = default_rng(42)
    violations, worst = 0, -math.inf
    for i in range(1000):
        q = ("1", "2", "inf")[i % 3]
        r = (1.0, 2.0)[(i // 3) % 2]
        arch = random_architecture(rng, 4, 6, 6)
        spread = float(rng.uniform(0.2, 1.0))
        theta = sample_member(arch, q, r, rng, spread=spread)
        other = sample_member(arch, q, r, rng, spread=spread)
        X = rng.uniform(-1.0, 1.0, (100, arch.d_in))
        gap = vector_norms(realize_batch(theta, X) - realize_batch(other, X), q)
        slack = gap - telescoping_bound(theta, other, X, q)
        worst = max(worst, float(slack.max()))
        violations += int(np.count_nonzero(slack > 1e-12))
    record(acceptance_log, 2, violations == 0, time.perf_counter() - start, 30.0,
           f"1000 pairs x 100 inputs, {violations} violations, max gap - bound {worst:.2e}")


# 3 -------------------------------------------------------------------------

def test_criterion_3_sufficient_step(acceptance_log):
    start = time.perf_counter()
    rng = default_rng(42)
    archs = [random_architecture(rng, 4, 6, 2) for _ in range(20)]
    violations, worst, count = 0, 0.0, 0
    for i in range(500):
        arch = archs[i % 20]
        q = ("1", "2", "inf")[i % 3]
        r = (1.0, 2.0)[(i // 3) % 2]
        eps = (0.1, 0.5)[(i // 6) % 2]
        box = BoxDomain(arch.d_in, 1.0)
        theta = sample_member(arch, q, r, rng)
        plan = sufficient_eta(eps, arch, r, q, box)
        err = sup_norm_gap(theta, quantize_floor(theta, plan.eta), box, q, resolution_for(arch.d_in)).value
        worst = max(worst, err / eps)
        violations += err > eps
        count += 1
    record(acceptance_log, 3, violations == 0, time.perf_counter() - start, 60.0,
           f"{count} networks on 20 architectures, {violations} violations, max error/eps {worst:.2e}")


# 4 -------------------------------------------------------------------------

def test_criterion_4_necessity_witness(acceptance_log):
    start = time.perf_counter()
    r, ok, worst, lines = 2.0, True, 0.0, 0
    for L in (2, 3):
        for widths in ((2,) * (L + 1), (1, 3, 2, 4)[: L + 1]):
            arch = Architecture(widths)
            box = BoxDomain(arch.d_in, 1.0)
            for eps in (0.05, 0.1, 0.5, 1.0):
                eta = 2.0 * necessary_eta_bound(eps, arch, r, "inf", box)
                a = eta / 4.0
                theta = adversarial_witness(arch, r, eta, a, "inf")
                quantized = quantize_floor(theta, eta)
                x_star = analytic_maximizer(arch, box)
                measured = sup_norm_gap(theta, quantized, box, "inf", 3, include=x_star[None]).value
                expected = min(r, eta - a) * r ** (L - 1) * box.D * dim_power(arch.min_width(), "inf")
                closed_form = adversarial_error(arch, r, eta, a, "inf", box)
                dev = max(abs(measured - expected), abs(closed_form - expected)) / expected
                worst = max(worst, dev)
                ok &= dev <= 1e-12 and measured > eps
                lines += 1
    record(acceptance_log, 4, ok, time.perf_counter() - start, 5.0,
           f"{lines} adversarial witnesses exceed eps, max relative deviation {worst:.2e}")


# 5 -------------------------------------------------------------------------

def test_criterion_5_dyadic_rounding(acceptance_log):
    start = time.perf_counter()
    rng = default_rng(42)
    failures, worst = [], 0.0
    for i in range(100):
        L = 2 + i % 2
        eps = (0.1, 0.25)[(i // 2) % 2]
        widths = [int(rng.integers(1, 3))] + [int(rng.integers(1, 5)) for _ in range(L)]
        arch = Architecture(widths)
        scale = float(rng.uniform(0.5, 8.0))
        theta = NetworkParams.unflatten(arch, rng.uniform(-scale, scale, arch.parameter_dim()))
        box = BoxDomain(arch.d_in, 1.0)
        plan, quantized = dyadic_plan(theta, eps, box)
        k, m = plan.details["k"], plan.details["m"]
        err = sup_norm_gap(theta, quantized, box, "inf", resolution_for(arch.d_in)).value
        worst = max(worst, err / eps)
        checks = {
            "error": err <= eps,
            "step": plan.eta <= eps ** m,
            "membership": bool(param_set_membership(quantized, "max", eps ** -k)),
            "dominance": m <= 3 * k * L + math.log2(math.ceil(box.D)),
        }
        failures += [(i, name) for name, good in checks.items() if not good]
    record(acceptance_log, 5, not failures, time.perf_counter() - start, 60.0,
           f"100 networks, {len(failures)} failed checks, max error/eps {worst:.2e}")


# 6 -------------------------------------------------------------------------

def test_criterion_6_ball_sandwich(acceptance_log):
    start = time.perf_counter()
    bad, count = [], 0
    for n in (1, 2):
        for r in (1.0, 2.0):
            for eps in (r / 2, r / 4):
                P = ball_points(n, r, eps / 10, "inf")
                rep, _ = brute_force_cover(P, eps, "inf")
                ball = ball_entropy_bounds(n, r, eps, "inf")
                lo, hi = ball.log2_size_lower - 1, ball.log2_size_upper + 1
                if not (lo <= rep.log2_size_lower and rep.log2_size_upper <= hi
                        and lo <= rep.log2_size_upper):
                    bad.append((n, r, eps))
                count += 1
    record(acceptance_log, 6, not bad, time.perf_counter() - start, 120.0,
           f"{count} configurations, greedy cover and packing within the bounds, failures {bad}")


# 7 -------------------------------------------------------------------------

def test_criterion_7_family_covering(acceptance_log):
    start = time.perf_counter()
    specs = [FamilySpec(M, L, r, q, gamma=g)
             for (M, L, r, g) in ((1, 1, 1.0, 1.0), (2, 2, 2.0, 1.0), (3, 2, 2.0, 0.5), (3, 1, 1.5, 2.0))
             for q in ("1", "inf", "fro", "max")]
    violations, total, worst = 0, 0, 0.0
    for j, spec in enumerate(specs):
        check = family_covering_check(spec, samples=200, seed=42 + j, resolution=64)
        violations += check.violations
        total += len(check.errors)
        worst = max(worst, check.max_error / check.bound)
    record(acceptance_log, 7, violations == 0, time.perf_counter() - start, 60.0,
           f"{total} sampled members over {len(specs)} tiny families, {violations} violations, "
           f"max error/bound {worst:.3f}")


# 8 -------------------------------------------------------------------------

def plan_bits(out, *extra):
    from quantcert.cli import main

    assert main(["plan-bits", "--out", str(out), *extra]) == 0
    return read_json(out / "plan_bits_fit.json"), (out / "plan_bits.csv").read_text().splitlines()


def test_criterion_8_bit_growth(acceptance_log, tmp_path):
    start = time.perf_counter()
    const_fit, _ = plan_bits(tmp_path / "const", "--depth-rule", "const:3")
    log_fit, _ = plan_bits(tmp_path / "log", "--depth-rule", "log2")
    _, rows = plan_bits(tmp_path / "m2", "--depth-rule", "const:1", "--radius-rule", "const:1",
                        "--M-ladder", "2,4,8")
    m2 = dict(zip(rows[0].split(","), rows[1].split(",")))
    ratios = log_fit["bits_over_log2M_squared"][2:]
    checks = {
        "constant depth quadratic term": abs(const_fit["normalized_quadratic"]) < 0.05,
        "log depth ratio bounded": max(ratios) / min(ratios) < 2.0,
        "M=2 row": float(m2["eta_M"]) == 0.25,
    }
    record(acceptance_log, 8, all(checks.values()), time.perf_counter() - start, 5.0,
           f"normalized quadratic {const_fit['normalized_quadratic']:.4f}, "
           f"bits/log2(M)^2 in [{min(ratios):.3f}, {max(ratios):.3f}], checks {checks}")


# 9 -------------------------------------------------------------------------

PIPELINE = (
    ("bound", "--widths", "1,5,5,1", "--r", "2", "--q", "1"),
    ("witness", "--kind", "pair", "--widths", "2,3,3,1", "--eps", "0.1"),
    ("witness", "--kind", "adversarial", "--widths", "2,2,1", "--eps", "0.5", "--out-sub", "adv"),
    ("verify", "--network", "{out}/adv/theta.json", "--quantized", "{out}/adv/quantized.json",
     "--plan", "{out}/adv/plan.json", "--out-sub", "adv"),
    ("quantize", "--network", "{out}/theta.json", "--eps", "0.5", "--r", "2", "--verify", "--p", "2",
     "--samples", "20000", "--out-sub", "quant"),
    ("quantize", "--network", "{out}/theta.json", "--mode", "dyadic", "--eps", "0.25", "--out-sub", "p44"),
    ("plan-bits", "--depth-rule", "log2"),
    ("covering", "--kind", "relu-family"),
    ("covering", "--kind", "brute-ball", "--n", "2", "--eps", "0.25", "--out-sub", "brute"),
)


def run_pipeline(out, hash_seed):
    env = dict(os.environ, PYTHONHASHSEED=str(hash_seed))
    for step in PIPELINE:
        args = [a.format(out=out) for a in step]
        sub = ""
        if "--out-sub" in args:
            i = args.index("--out-sub")
            sub = args[i + 1]
            del args[i:i + 2]
        proc = subprocess.run([sys.executable, "-m", "quantcert", *args, "--out", str(out / sub)],
                              capture_output=True, text=True, env=env)
        assert proc.returncode in (0, 3), proc.stderr
    return {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


def test_criterion_9_determinism(acceptance_log, tmp_path):
    start = time.perf_counter()
    first = run_pipeline(tmp_path / "run1", 1)
    second = run_pipeline(tmp_path / "run2", 2)
    differing = sorted(str(k) for k in first if first[k] != second.get(k))
    ok = first.keys() == second.keys() and not differing and len(first) >= 15
    record(acceptance_log, 9, ok, time.perf_counter() - start, None,
           f"{len(first)} report files compared byte for byte, differing {differing}")
