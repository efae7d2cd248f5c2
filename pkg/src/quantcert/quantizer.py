"""Uniform grid quantization with certified step sizes.

Rules: floor ``x -> floor(x/eta) eta`` and nearest-with-clipping. Step
solvers: a sufficient step guaranteeing uniform error ``eps`` on a norm ball,
the matching necessary bound with its adversarial network, a dyadic rounding
scheme for arbitrary bounded parameters, and the per-family step that keeps
approximation rates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .encodability import FamilySpec
from .error_eval import sup_norm_gap
from .errors import HypothesisViolation, SchemaError, UnsupportedRegime
from .lipschitz import _lower_norm, effective_norm, lower_constant, rectangular_identity
from .network import (
    Architecture,
    BoxDomain,
    NetworkParams,
    NormSpec,
    default_rng,
    domain_constant,
    param_set_membership,
    sample_member,
)


def bits_for(grid_bound: float, eta: float) -> int | None:
    """Bits to index ``eta Z`` inside ``[-grid_bound, grid_bound]``; ``None`` if unbounded."""
    if math.isinf(grid_bound):
        return None
    levels = 2.0 * grid_bound / eta + 1.0
    return max(1, math.ceil(math.log2(levels)))


@dataclass(frozen=True)
class QuantizationPlan:
    eta: float
    grid_bound: float  # inf means unbounded grid
    epsilon: float | None  # None when the step was chosen by hand
    rule: str  # floor | nearest
    provenance: str
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.eta > 0:
            raise HypothesisViolation(f"step must be > 0, got {self.eta}")
        if not self.grid_bound > 0:
            raise HypothesisViolation(f"grid bound must be > 0, got {self.grid_bound}")
        if self.rule not in ("floor", "nearest"):
            raise HypothesisViolation(f"unknown rounding rule {self.rule!r}")

    @property
    def bits_per_coordinate(self) -> int | None:
        return bits_for(self.grid_bound, self.eta)

    @property
    def log2_levels(self) -> float:
        """Unrounded ``log2(2 r'/eta + 1)``."""
        return math.log2(2.0 * self.grid_bound / self.eta + 1.0)

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.grid_bound)

    def to_json(self) -> dict:
        return {
            "eta": self.eta,
            "grid_bound": None if self.unbounded else self.grid_bound,
            "epsilon": self.epsilon,
            "bits_per_coordinate": self.bits_per_coordinate,
            "unbounded": self.unbounded,
            "rule": self.rule,
            "provenance": self.provenance,
            "details": self.details,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "QuantizationPlan":
        if not isinstance(doc, dict):
            raise SchemaError("plan: expected an object")
        for key in ("eta", "grid_bound", "epsilon", "rule", "provenance"):
            if key not in doc:
                raise SchemaError(f"plan: missing required field {key!r}")
        known = {"eta", "grid_bound", "epsilon", "bits_per_coordinate", "unbounded", "rule",
                 "provenance", "details"}
        extra = set(doc) - known
        if extra:
            raise SchemaError(f"plan: unexpected fields {sorted(extra)}")
        try:
            bound = math.inf if doc["grid_bound"] is None else float(doc["grid_bound"])
            eps = None if doc["epsilon"] is None else float(doc["epsilon"])
            return cls(float(doc["eta"]), bound, eps, str(doc["rule"]),
                       str(doc["provenance"]), dict(doc.get("details") or {}))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"plan: {exc}") from exc


# -- rounding rules ---------------------------------------------------------

def _check_eta(eta: float) -> None:
    if not (eta > 0 and math.isfinite(eta)):
        raise HypothesisViolation(f"step eta must be finite and > 0, got {eta}")


def floor_indices(a: np.ndarray, eta: float) -> np.ndarray:
    """``floor(a/eta)`` corrected so that ``k eta <= a < (k+1) eta`` holds in floating point."""
    k = np.floor(a / eta)
    k = np.where((k + 1) * eta <= a, k + 1, k)
    return np.where(k * eta > a, k - 1, k)


def quantize_floor(theta: NetworkParams, eta: float) -> NetworkParams:
    """Every coordinate ``x`` becomes ``floor(x/eta) eta``."""
    _check_eta(eta)
    return theta.map(lambda a: floor_indices(a, eta) * eta)


def nearest_indices(a: np.ndarray, eta: float, bound: float) -> np.ndarray:
    k0 = floor_indices(a, eta)
    up = (k0 + 1) * eta - a <= a - k0 * eta  # ties go up
    k = np.where(up, k0 + 1, k0)
    kmax = math.floor(bound / eta)
    return np.clip(k, -kmax, kmax)


def quantize_nearest_clipped(theta: NetworkParams, eta: float, bound: float) -> NetworkParams:
    """Nearest point of ``eta Z`` in ``[-bound, bound]``; ties round toward ``+inf``."""
    _check_eta(eta)
    if not bound >= eta:
        raise HypothesisViolation(f"clipping bound {bound} is smaller than the step {eta}")
    return theta.map(lambda a: nearest_indices(a, eta, bound) * eta)


def quantize_toward_zero(theta: NetworkParams, eta: float) -> NetworkParams:
    """Truncate each coordinate toward zero on ``eta Z``; never increases any entry's magnitude."""
    _check_eta(eta)
    return theta.map(lambda a: np.sign(a) * floor_indices(np.abs(a), eta) * eta)


# -- step-size solvers ------------------------------------------------------

def sufficient_eta(epsilon: float, arch: Architecture, r: float, q, box: BoxDomain) -> QuantizationPlan:
    """Step ``eps / (c W L^2 (2r)^(L-1))`` certifying uniform error ``eps`` on the ``q`` ball.

    Any rounding with ``||Q(theta) - theta||_inf <= eta`` is covered, so the
    plan uses the floor rule. Quantized parameters stay within ``2r``.
    """
    q = NormSpec.parse(q)
    if not r >= 1:
        raise HypothesisViolation(f"hypothesis r >= 1 violated: r={r}")
    box.check_network(arch)
    q_eff, r_eff = effective_norm(q, r, arch)
    c = domain_constant(math.inf, box, q_eff)
    L, W = arch.depth, arch.width()
    ceiling = c * L ** 2 * (2.0 * r_eff) ** (L - 1)
    if not 0 < epsilon < ceiling:
        raise HypothesisViolation(
            f"hypothesis 0 < eps < c L^2 (2r)^(L-1) = {ceiling!r} violated: eps={epsilon}")
    eta = epsilon / (W * ceiling)
    return QuantizationPlan(eta, 2.0 * r, float(epsilon), "floor", "sufficient",
                            {"c": c, "L": L, "W": W, "r": float(r), "q": str(q), "D": box.D, "d": box.d})


def necessary_eta_bound(epsilon: float, arch: Architecture, r: float, q, box: BoxDomain) -> float:
    """``eps / (c' r^(L-1))`` with ``c' = D N_min^(1/q)``.

    Any step making floor quantization ``eps``-accurate on the whole ball has
    ``min(r, eta)`` at most this value.
    """
    if not r >= 1:
        raise HypothesisViolation(f"hypothesis r >= 1 violated: r={r}")
    if not epsilon > 0:
        raise HypothesisViolation(f"eps must be > 0, got {epsilon}")
    c_prime = lower_constant(arch, q, math.inf, box)
    return epsilon / (c_prime * r ** (arch.depth - 1))


def necessity_strengthened(epsilon: float, arch: Architecture, r: float, q, box: BoxDomain) -> bool:
    """Whether ``eps < c' r^L``, in which case ``eta`` itself is bounded (not only ``min(r, eta)``)."""
    c_prime = lower_constant(arch, q, math.inf, box)
    return epsilon < c_prime * r ** arch.depth


def adversarial_witness(arch: Architecture, r: float, eta: float, a: float, q=NormSpec.INF) -> NetworkParams:
    """Network in the ``q`` ball of radius ``r`` that floor quantization maps to zero.

    ``W_1 = lambda I`` with ``lambda = min(r, eta - a)``, ``W_l = r I`` after,
    zero biases. The first layer floors to zero and the zero propagates.
    """
    _check_eta(eta)
    if not 0 < a < eta:
        raise HypothesisViolation(f"need 0 < a < eta, got a={a}, eta={eta}")
    if not r >= 1:
        raise HypothesisViolation(f"hypothesis r >= 1 violated: r={r}")
    _lower_norm(q)
    lam = min(r, eta - a)
    n = arch.widths
    weights = [(lam if l == 0 else r) * rectangular_identity(n[l + 1], n[l]) for l in range(arch.depth)]
    biases = [np.zeros(n[l + 1]) for l in range(arch.depth)]
    return NetworkParams(arch, weights, biases)


def adversarial_error(arch: Architecture, r: float, eta: float, a: float, q, box: BoxDomain) -> float:
    """Closed-form gap of :func:`adversarial_witness` at the corner maximizer."""
    lam = min(r, eta - a)
    return lam * r ** (arch.depth - 1) * lower_constant(arch, q, math.inf, box)


def dyadic_parameters(max_abs: float, arch: Architecture, epsilon: float, box: BoxDomain) -> tuple[int, int, float]:
    """``(k, m, eta)`` of the dyadic rounding scheme."""
    if not 0 < epsilon < 0.5:
        raise HypothesisViolation(f"hypothesis eps in (0, 1/2) violated: eps={epsilon}")
    if arch.depth < 2:
        raise HypothesisViolation(f"hypothesis L >= 2 violated: L={arch.depth}")
    log_inv = math.log2(1.0 / epsilon)
    k = math.ceil(math.log2(max(max_abs, arch.width(), arch.depth)) / log_inv)
    m = 2 * k * arch.depth + k + 1 + math.ceil(math.log2(math.ceil(box.D)))
    eta = 2.0 ** (-m * math.ceil(log_inv))
    return k, m, eta


def dyadic_plan(theta: NetworkParams, epsilon: float, box: BoxDomain) -> tuple[QuantizationPlan, NetworkParams]:
    """Round ``theta`` to the nearest point of ``eta Z`` in ``[-eps^-k, eps^-k]``.

    ``k`` measures ``max(||theta||_inf, W, L)`` in powers of ``1/eps`` and the
    dyadic step ``eta <= eps^m`` makes the sup-norm error at most ``eps``.
    """
    arch = theta.arch
    box.check_network(arch)
    k, m, eta = dyadic_parameters(theta.max_abs(), arch, epsilon, box)
    bound = epsilon ** -k
    quantized = quantize_nearest_clipped(theta, eta, bound)
    prior = 3 * k * arch.depth + math.log2(math.ceil(box.D))
    plan = QuantizationPlan(eta, bound, float(epsilon), "nearest", "dyadic",
                            {"k": k, "m": m, "eps_pow_m": epsilon ** m, "prior_requirement": prior,
                             "L": arch.depth, "W": arch.width(), "D": box.D})
    return plan, quantized


def speed_preserving_eta(spec: FamilySpec) -> float:
    """``(M^gamma Lip(M, q))^-1``."""
    return spec.eta()


def family_plan(spec: FamilySpec) -> QuantizationPlan:
    """Grid ``eta_M Z`` inside ``[-r_M, r_M]`` for one member of a family ladder."""
    return QuantizationPlan(spec.eta(), float(spec.r_M), float(spec.M) ** -spec.gamma, "floor",
                            "speed_preserving", spec.to_json() | {"lip": spec.lipschitz()})


@dataclass(frozen=True)
class FamilyCoverCheck:
    """Outcome of sampling a family and measuring each member against its quantization."""

    spec: FamilySpec
    eta: float
    bound: float  # c M^-gamma
    errors: tuple[float, ...]
    architectures: tuple[tuple[int, ...], ...]
    membership_failures: int

    @property
    def violations(self) -> int:
        return sum(e > self.bound for e in self.errors) + self.membership_failures

    @property
    def max_error(self) -> float:
        return max(self.errors, default=0.0)


def sample_family_member(spec: FamilySpec, rng: np.random.Generator) -> NetworkParams:
    """Random depth ``<= L_M``, hidden widths ``<= M``, at most ``M`` nonzeros, inside the ``q`` ball."""
    L = int(rng.integers(1, spec.L_M + 1))
    hidden = [int(rng.integers(1, spec.M + 1)) for _ in range(L - 1)]
    arch = Architecture((spec.d_in, *hidden, spec.d_out))
    theta = sample_member(arch, spec.q, spec.r_M, rng)
    vec = theta.flatten()
    if vec.size > spec.M:
        drop = rng.permutation(vec.size)[spec.M:]
        vec[drop] = 0.0
    # zeroing entries never increases the norms allowed here
    return NetworkParams.unflatten(arch, vec)


def family_covering_check(spec: FamilySpec, samples: int = 200, seed: int = 42,
                          resolution: int = 65, D: float = 1.0) -> FamilyCoverCheck:
    """Quantize sampled members toward zero at ``eta_M`` and compare realizations.

    Truncation keeps every entry's magnitude, so the quantized network stays
    in the ball for entrywise-monotone norms; the spectral norm is not
    monotone and is rejected. The error bound is ``c M^-gamma`` with ``c`` the
    sup-norm domain constant of the operator regime containing the ball.
    """
    if spec.q is NormSpec.TWO:
        raise UnsupportedRegime("truncation does not preserve spectral-norm balls; use q in {1, inf, fro, max}")
    if spec.d_in > 2:
        raise HypothesisViolation(f"grid evaluation is limited to d_in <= 2, got {spec.d_in}")
    box = BoxDomain(spec.d_in, D)
    q_eff = NormSpec.TWO if spec.q is NormSpec.FRO else (NormSpec.INF if spec.q is NormSpec.MAX else spec.q)
    bound = domain_constant(math.inf, box, q_eff) * float(spec.M) ** -spec.gamma
    eta = spec.eta()
    rng = default_rng(seed)
    errors, archs, failures = [], [], 0
    for _ in range(samples):
        theta = sample_family_member(spec, rng)
        quantized = quantize_toward_zero(theta, eta)
        if not param_set_membership(quantized, spec.q, spec.r_M):
            failures += 1
        errors.append(sup_norm_gap(theta, quantized, box, NormSpec.INF, resolution).value)
        archs.append(theta.arch.widths)
    return FamilyCoverCheck(spec, eta, bound, tuple(errors), tuple(archs), failures)


# -- bit growth over a ladder of M ------------------------------------------

def parse_rule(rule: str, kind: str):
    """``const:K``, ``log2`` (``ceil(log2 M)``, at least 1), ``M`` or ``poly:a`` (``M^a``)."""
    rule = rule.strip()
    if rule.startswith("const:"):
        value = float(rule[6:])
        return lambda M: value
    if rule.startswith("poly:"):
        a = float(rule[5:])
        return lambda M: float(M) ** a
    if rule == "log2":
        return lambda M: max(1, math.ceil(math.log2(M)))
    if rule == "M":
        return lambda M: float(M)
    raise HypothesisViolation(f"unknown {kind} rule {rule!r}; use const:K, log2, M or poly:a")


@dataclass(frozen=True)
class BitGrowth:
    rows: tuple[dict, ...]
    linear: tuple[float, float]  # bits ~ a t + b, t = log2 M
    quadratic: tuple[float, float, float]  # bits ~ c2 t^2 + c1 t + c0
    normalized_quadratic: float  # c2 t_max^2 / (bits range)
    ratio_log2_squared: tuple[float, ...]  # bits / t^2 per rung

    CSV_COLUMNS = ("M", "L_M", "r_M", "eta_M", "bits", "log2_levels", "lip")

    def to_json(self) -> dict:
        return {
            "linear_fit": {"a": self.linear[0], "b": self.linear[1]},
            "quadratic_fit": {"c2": self.quadratic[0], "c1": self.quadratic[1], "c0": self.quadratic[2]},
            "normalized_quadratic": self.normalized_quadratic,
            "bits_over_log2M_squared": list(self.ratio_log2_squared),
            "fit_target": "log2_levels",
        }


def bit_growth(ladder, gamma: float, depth_rule: str, radius_rule: str, q,
               d_in: int = 1, d_out: int = 1) -> BitGrowth:
    """Speed-preserving steps along ``ladder`` with least-squares growth fits.

    Fits use the unrounded ``log2`` level count so the ceiling does not add
    jitter; ``bits`` is the integer count actually needed.
    """
    depth = parse_rule(depth_rule, "depth")
    radius = parse_rule(radius_rule, "radius")
    rows = []
    for M in ladder:
        L_M = depth(M)
        if int(L_M) != L_M:
            raise HypothesisViolation(f"depth rule gave a non-integer depth {L_M} at M={M}")
        spec = FamilySpec(int(M), int(L_M), radius(M), q, d_in, d_out, gamma)
        plan = family_plan(spec)
        rows.append({"M": int(M), "L_M": int(L_M), "r_M": float(spec.r_M), "eta_M": plan.eta,
                     "bits": plan.bits_per_coordinate, "log2_levels": plan.log2_levels,
                     "lip": spec.lipschitz()})
    if len(rows) < 3:
        raise HypothesisViolation("need at least three rungs to fit growth")
    t = np.log2([row["M"] for row in rows])
    y = np.array([row["log2_levels"] for row in rows])
    a, b = np.linalg.lstsq(np.stack([t, np.ones_like(t)], 1), y, rcond=None)[0]
    c2, c1, c0 = np.linalg.lstsq(np.stack([t * t, t, np.ones_like(t)], 1), y, rcond=None)[0]
    spread = float(y.max() - y.min())
    norm = float(c2) * float(t.max()) ** 2 / spread if spread > 0 else 0.0
    ratios = tuple(float(row["bits"]) / float(tt) ** 2 for row, tt in zip(rows, t))
    return BitGrowth(tuple(rows), (float(a), float(b)), (float(c2), float(c1), float(c0)), norm, ratios)
