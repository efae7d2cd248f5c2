"""Lipschitz bounds for the map from parameters to realizations.

Upper bound ``c W L^2 r^(L-1)`` and lower bound ``c' L r^(L-1)`` on the
sup-over-pairs ratio ``||R_theta - R_theta'|| / ||theta - theta'||_inf`` for
parameters in the norm ball of radius ``r``, plus the per-pair layer-wise
bound and the scaled-identity networks that make it an equality.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import integrate

from .errors import HypothesisViolation, StructuralError, UnsupportedRegime
from .network import (
    Architecture,
    BoxDomain,
    NetworkParams,
    NormSpec,
    dim_power,
    domain_constant,
    operator_norm,
    partial_realizations,
    vector_norm,
    vector_norms,
)


def _check_radius(r: float) -> None:
    if not r >= 1:
        raise HypothesisViolation(f"the Lipschitz bounds require r >= 1, got r={r}")


def effective_norm(q, r: float, arch: Architecture) -> tuple[NormSpec, float]:
    """Operator-norm regime and radius that contain the ``q`` parameter set.

    Frobenius balls sit inside spectral balls of the same radius; max-norm
    balls of radius ``r`` sit inside operator balls of radius ``W r``.
    """
    q = NormSpec.parse(q)
    if q is NormSpec.FRO:
        return NormSpec.TWO, r
    if q is NormSpec.MAX:
        return NormSpec.INF, arch.width() * r
    return q, r


def _lower_norm(q) -> NormSpec:
    q = NormSpec.parse(q)
    if q is NormSpec.FRO:
        # Scaled rectangular identities have Frobenius norm lambda*sqrt(N_min),
        # so the witness family does not lie in the Frobenius ball.
        raise UnsupportedRegime("no certified lower bound for Frobenius-constrained parameters")
    return NormSpec.INF if q is NormSpec.MAX else q


def lipschitz_upper(arch: Architecture, r: float, q, p: float, box: BoxDomain) -> float:
    """``c W L^2 r^(L-1)`` with ``c`` from :func:`domain_constant`."""
    _check_radius(r)
    box.check_network(arch)
    q_eff, r_eff = effective_norm(q, r, arch)
    c = domain_constant(p, box, q_eff)
    L = arch.depth
    return c * arch.width() * L ** 2 * r_eff ** (L - 1)


def positive_part_moment(p: float, box: BoxDomain, q) -> float:
    """``(int_{[-D,D]^d} ||max(x, 0)||_q^p dx)^(1/p)``.

    Coordinates that are negative contribute a factor ``D`` each and vanish
    under the ReLU, so the integral splits over the set of positive
    coordinates into integrals over ``[0, D]^k``.
    """
    q = NormSpec.parse(q)
    d, D = box.d, box.D
    if q is NormSpec.INF:
        val, _ = integrate.quad(lambda t: t ** p * d * (D + t) ** (d - 1), 0.0, D,
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return val ** (1.0 / p)
    if d > 4:
        raise UnsupportedRegime(f"cubature limited to d <= 4 (got d={d})")
    exponent = q.vector_exponent
    total = 0.0
    for k in range(1, d + 1):
        n_subsets = len(list(combinations(range(d), k)))

        def integrand(*y):
            return np.linalg.norm(y, ord=exponent) ** p

        val, _ = integrate.nquad(integrand, [(0.0, D)] * k,
                                 opts={"epsabs": 0.0, "epsrel": 1e-10, "limit": 100})
        total += n_subsets * D ** (d - k) * val
    return total ** (1.0 / p)


def lower_constant(arch: Architecture, q, p: float, box: BoxDomain) -> float:
    """Constant ``c'`` of the lower bound.

    For ``p = inf`` it is ``D N_min^(1/q)``, the largest ``q``-norm of a box
    point supported on the first ``N_min`` coordinates. For ``p < inf`` the
    input layer must be the narrowest one and ``c'`` is the ``L^p`` norm of
    ``x -> ||max(x, 0)||_q`` over the box.
    """
    q_low = _lower_norm(q)
    p = float(p)
    if p < 1:
        raise HypothesisViolation(f"exponent p must be in [1, inf], got {p}")
    if math.isinf(p):
        return box.D * dim_power(arch.min_width(), q_low)
    if arch.d_in != arch.min_width():
        raise UnsupportedRegime(
            f"lower bound for p={p} needs the input layer to be the narrowest "
            f"(N_0={arch.d_in}, N_min={arch.min_width()})")
    return positive_part_moment(p, box, q_low)


def lipschitz_lower(arch: Architecture, r: float, q, p: float, box: BoxDomain) -> float:
    """``c' L r^(L-1)``: the witness ratio in the limit of vanishing perturbation."""
    _check_radius(r)
    box.check_network(arch)
    return lower_constant(arch, q, p, box) * arch.depth * r ** (arch.depth - 1)


@dataclass(frozen=True)
class LipschitzBoundReport:
    arch: Architecture
    r: float
    q: NormSpec
    p: float
    box: BoxDomain
    upper: float
    lower: float
    c: float
    c_prime: float

    def __post_init__(self):
        assert self.upper >= 0 and self.lower >= 0
        L, W = self.arch.depth, self.arch.width()
        if self.c * W * L >= self.c_prime:
            assert self.upper >= self.lower * (1 - 1e-12), (self.upper, self.lower)

    @property
    def ratio(self) -> float:
        return self.upper / self.lower if self.lower > 0 else math.inf

    def to_json(self) -> dict:
        return {
            "widths": list(self.arch.widths),
            "L": self.arch.depth,
            "W": self.arch.width(),
            "r": self.r,
            "q": str(self.q),
            "p": "inf" if math.isinf(self.p) else self.p,
            "D": self.box.D,
            "d": self.box.d,
            "c": self.c,
            "c_prime": self.c_prime,
            "upper": self.upper,
            "lower": self.lower,
            "ratio": self.ratio,
        }

    CSV_COLUMNS = ("L", "W", "r", "q", "p", "D", "upper", "lower", "ratio")

    def csv_row(self) -> dict:
        doc = self.to_json()
        return {k: doc[k] for k in self.CSV_COLUMNS}


def lipschitz_bounds(arch: Architecture, r: float, q, p: float, box: BoxDomain) -> LipschitzBoundReport:
    q = NormSpec.parse(q)
    upper = lipschitz_upper(arch, r, q, p, box)
    lower = lipschitz_lower(arch, r, q, p, box)
    q_eff, _ = effective_norm(q, r, arch)
    return LipschitzBoundReport(arch, float(r), q, float(p), box, upper, lower,
                                c=domain_constant(p, box, q_eff),
                                c_prime=lower_constant(arch, q, p, box))


# -- per-pair bound ---------------------------------------------------------

def telescoping_terms(theta: NetworkParams, theta_prime: NetworkParams, X, q) -> np.ndarray:
    """Per-layer contributions to the layer-wise bound, shape ``(n, L)``.

    Layer ``l`` contributes ``prod_{k>l} |||W_k||| * (|||W_l - W'_l||| *
    ||R_{theta'_{l-1}}(x)|| + ||b_l - b'_l||)`` where ``theta'_{l-1}`` is
    ``theta'`` truncated to its first ``l-1`` layers (identity for ``l=1``).
    """
    q = NormSpec.parse(q)
    if not q.is_operator:
        raise UnsupportedRegime(f"the layer-wise bound uses operator norms; got q={q}")
    if theta.arch != theta_prime.arch:
        raise StructuralError(
            f"architecture mismatch: {theta.arch.widths} vs {theta_prime.arch.widths}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    L = theta.depth
    w_norms = [operator_norm(w, q) for w in theta.weights]
    tails = [math.prod(w_norms[l + 1:]) for l in range(L)]
    dw = [operator_norm(w - wp, q) for w, wp in zip(theta.weights, theta_prime.weights)]
    db = [vector_norm(b - bp, q) for b, bp in zip(theta.biases, theta_prime.biases)]
    partial = partial_realizations(theta_prime, X)
    inputs = [X] + partial[:-1]
    terms = np.empty((X.shape[0], L))
    for l in range(L):
        terms[:, l] = tails[l] * (dw[l] * vector_norms(inputs[l], q) + db[l])
    return terms


def telescoping_bound(theta: NetworkParams, theta_prime: NetworkParams, x, q):
    """Layer-wise upper bound on ``||R_theta(x) - R_theta'(x)||_q``.

    Returns a float for a single input vector, an array for a batch.
    """
    x = np.asarray(x, dtype=np.float64)
    terms = telescoping_terms(theta, theta_prime, x, q)
    total = terms.sum(axis=1)
    return float(total[0]) if x.ndim == 1 else total


# -- witnesses --------------------------------------------------------------

def rectangular_identity(m: int, n: int) -> np.ndarray:
    return np.eye(m, n)


@dataclass(frozen=True)
class WitnessPair:
    theta: NetworkParams
    theta_prime: NetworkParams
    epsilon: float
    lambdas: tuple[float, ...]

    @property
    def arch(self) -> Architecture:
        return self.theta.arch

    def analytic_gap(self, x, q) -> float:
        """``((1+eps)^L - 1) * prod(lambda) * ||x||_q`` for admissible ``x``.

        Valid for ``x >= 0`` supported on the first ``N_min`` coordinates.
        """
        x = np.asarray(x, dtype=np.float64)
        s = self.arch.min_width()
        if np.any(x < 0) or np.any(x[s:] != 0):
            raise HypothesisViolation(
                "closed-form gap needs x >= 0 supported on the first N_min coordinates")
        L = self.arch.depth
        return ((1.0 + self.epsilon) ** L - 1.0) * math.prod(self.lambdas) * vector_norm(x, q)

    def param_distance(self) -> float:
        return self.epsilon * max(self.lambdas)


def make_witness_pair(arch: Architecture, lambdas, epsilon: float) -> WitnessPair:
    """Scaled rectangular identities ``W_l = lambda_l I`` and ``W'_l = (1+eps) W_l``, zero biases."""
    if np.ndim(lambdas) == 0:
        lambdas = [float(lambdas)] * arch.depth
    lambdas = tuple(float(v) for v in lambdas)
    if len(lambdas) != arch.depth:
        raise StructuralError(f"need {arch.depth} scales, got {len(lambdas)}")
    if any(v < 0 for v in lambdas) or epsilon < 0:
        raise HypothesisViolation("scales and epsilon must be nonnegative")
    n = arch.widths
    weights = [lam * rectangular_identity(n[l + 1], n[l]) for l, lam in enumerate(lambdas)]
    biases = [np.zeros(n[l + 1]) for l in range(arch.depth)]
    theta = NetworkParams(arch, weights, biases)
    theta_prime = NetworkParams(arch, [(1.0 + epsilon) * w for w in weights], biases)
    return WitnessPair(theta, theta_prime, float(epsilon), lambdas)


def tightness_witness(arch: Architecture, r: float, epsilon: float) -> WitnessPair:
    """Witness pair with ``lambda_l = r / (1 + eps)``; both networks have norms ``<= r``."""
    return make_witness_pair(arch, r / (1.0 + epsilon), epsilon)


def analytic_maximizer(arch: Architecture, box: BoxDomain) -> np.ndarray:
    """``(D, ..., D, 0, ..., 0)`` with ``N_min`` leading coordinates equal to ``D``."""
    box.check_network(arch)
    x = np.zeros(arch.d_in)
    x[: arch.min_width()] = box.D
    return x


def witness_ratio(arch: Architecture, r: float, epsilon: float, q, box: BoxDomain) -> float:
    """Sup-norm gap over parameter distance for :func:`tightness_witness`.

    Equals ``c' r^(L-1) sum_{l=1..L} (1+eps)^(-(L-l))``, which tends to the
    lower bound ``c' L r^(L-1)`` as ``eps -> 0``.
    """
    L = arch.depth
    c_prime = box.D * dim_power(arch.min_width(), _lower_norm(q))
    lam = r / (1.0 + epsilon)
    return sum((1.0 + epsilon) ** (l - 1) for l in range(1, L + 1)) * lam ** (L - 1) * c_prime
