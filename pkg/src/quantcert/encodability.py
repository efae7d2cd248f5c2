"""Covering-number bounds and a brute-force covering oracle.

Formula-based bounds (norm balls, Lipschitz images of balls, quantized ReLU
families) report ``log2`` sizes. :func:`brute_force_cover` builds an explicit
greedy covering of a finite point set so the formulas can be checked at
small scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisViolation, StructuralError
from .network import NormSpec, dim_power, vector_norms

MAX_POINTS = 10 ** 6


@dataclass(frozen=True)
class CoveringReport:
    eps: float
    log2_size_upper: float
    log2_size_lower: float  # -inf when no lower bound is known
    construction: str  # grid_formula | lip_image_formula | relu_family_formula | brute_force
    parameters: dict = field(default_factory=dict)
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        assert self.log2_size_lower <= self.log2_size_upper + 1e-12, (
            self.log2_size_lower, self.log2_size_upper)

    def to_json(self) -> dict:
        def enc(v):
            if isinstance(v, float) and math.isinf(v):
                return None if v < 0 else "inf"
            return v

        return {
            "construction": self.construction,
            "eps": self.eps,
            "log2_size_upper": enc(self.log2_size_upper),
            "log2_size_lower": enc(self.log2_size_lower),
            "parameters": {k: enc(v) for k, v in self.parameters.items()},
            "terms": {k: enc(v) for k, v in self.terms.items()},
        }


# -- families of networks ---------------------------------------------------

@dataclass(frozen=True)
class FamilySpec:
    """Networks with depth ``<= L_M``, hidden widths ``<= M``, at most ``M``
    nonzero parameters and parameters in the ``q`` ball of radius ``r_M``."""

    M: int
    L_M: int
    r_M: float
    q: NormSpec = NormSpec.TWO
    d_in: int = 1
    d_out: int = 1
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "q", NormSpec.parse(self.q))
        if int(self.M) != self.M or self.M < 1:
            raise HypothesisViolation(f"M must be a positive integer, got {self.M}")
        if int(self.L_M) != self.L_M or self.L_M < 1:
            raise HypothesisViolation(f"L_M must be a positive integer, got {self.L_M}")
        if not self.r_M >= 1:
            raise HypothesisViolation(f"r_M must be >= 1, got {self.r_M}")
        if self.d_in < 1 or self.d_out < 1:
            raise StructuralError("input and output dimensions must be >= 1")
        if not self.gamma > 0:
            raise HypothesisViolation(f"gamma must be > 0, got {self.gamma}")

    @property
    def width_bound(self) -> int:
        return max(self.d_in, self.d_out, self.M)

    def lipschitz(self) -> float:
        """``max(d_in, d_out, M) L_M^2 r_M^(L_M-1)``, times ``max(...)^(L_M-1)`` for the max-norm."""
        base = self.width_bound * self.L_M ** 2 * self.r_M ** (self.L_M - 1)
        if self.q is NormSpec.MAX:
            base *= self.width_bound ** (self.L_M - 1)
        return float(base)

    def eta(self) -> float:
        return 1.0 / (self.M ** self.gamma * self.lipschitz())

    def to_json(self) -> dict:
        return {"M": self.M, "L_M": self.L_M, "r_M": self.r_M, "q": str(self.q),
                "d_in": self.d_in, "d_out": self.d_out, "gamma": self.gamma}


def family_lipschitz(M: int, L_M: int, r_M: float, q, d_in: int = 1, d_out: int = 1) -> float:
    return FamilySpec(M, L_M, r_M, q, d_in, d_out).lipschitz()


# -- formula bounds ---------------------------------------------------------

def ball_entropy_bounds(n: int, r: float, eps: float, q=NormSpec.INF) -> CoveringReport:
    """Volumetric sandwich ``n log2(r/eps) <= H <= n log2(3r/eps)`` for ``eps <= r``."""
    q = NormSpec.parse(q)
    if n < 1:
        raise HypothesisViolation(f"dimension must be >= 1, got {n}")
    if not r >= 1:
        raise HypothesisViolation(f"radius must be >= 1, got {r}")
    if not 0 < eps <= r:
        raise HypothesisViolation(f"the ball bounds need 0 < eps <= r, got eps={eps}, r={r}")
    return CoveringReport(
        eps=float(eps),
        log2_size_upper=n * math.log2(3.0 * r / eps),
        log2_size_lower=n * math.log2(r / eps),
        construction="grid_formula",
        parameters={"n": n, "r": float(r), "q": str(q)},
    )


def lip_image_constant(q, gamma: float) -> float:
    """``1 + gamma`` for ``q = inf``, ``max(2/q, 1 + gamma)`` otherwise."""
    q = NormSpec.parse(q)
    if not q.is_operator:
        raise HypothesisViolation(f"Lipschitz-image covering needs q in {{1, 2, inf}}, got {q}")
    if q is NormSpec.INF:
        return 1.0 + gamma
    return max(2.0 / q.vector_exponent, 1.0 + gamma)


def lip_image_step(n: int, q, lip: float, gamma: float, M: int) -> float:
    return 1.0 / (M ** gamma * dim_power(n, q) * lip)


def lip_image_direct_bits(n: int, r: float, q, lip: float, gamma: float, M: int) -> float:
    """``n [1 + (2/q) log2 n + log2 r + log2 lip + gamma log2 M]`` (the ``log2 n`` term vanishes for ``q = inf``)."""
    q = NormSpec.parse(q)
    inv_q = 0.0 if q is NormSpec.INF else 1.0 / q.vector_exponent
    return n * (1.0 + 2.0 * inv_q * math.log2(n) + math.log2(r) + math.log2(lip)
                + gamma * math.log2(M))


def lip_image_covering(n: int, r: float, q, lip: float, gamma: float, M: int) -> tuple[CoveringReport, float]:
    """Covering of the image of a ``q`` ball under a ``lip``-Lipschitz map.

    Returns the report (target radius ``M^-gamma``) and the grid step
    ``(M^gamma n^(1/q) lip)^-1``.
    """
    q = NormSpec.parse(q)
    if int(M) != M or M < 2:
        raise HypothesisViolation(f"the Lipschitz-image bound needs an integer M >= 2, got {M}")
    if n < 1 or not r >= 1 or not lip >= 1 or not gamma > 0:
        raise HypothesisViolation("need n >= 1, r >= 1, lip >= 1 and gamma > 0")
    c = lip_image_constant(q, gamma)
    eta = lip_image_step(n, q, lip, gamma, M)
    upper = c * n * (math.log2(n) + math.log2(r) + math.log2(lip) + math.log2(M))
    report = CoveringReport(
        eps=float(M) ** -gamma,
        log2_size_upper=upper,
        log2_size_lower=-math.inf,
        construction="lip_image_formula",
        parameters={"n": n, "r": float(r), "q": str(q), "lip": float(lip), "gamma": float(gamma),
                    "M": M, "eta": eta},
        terms={"c": c, "direct_bits": lip_image_direct_bits(n, r, q, lip, gamma, M)},
    )
    return report, eta


def relu_family_encoding_size(spec: FamilySpec) -> CoveringReport:
    """``log2`` size of the quantized family, split into three contributions.

    * ``arch_bits = log2(L_M M^(L_M-1))``: depth and hidden widths
    * ``support_bits = M log2(2 M^2 L_M)``: supports of at most ``M`` entries
    * ``grid_bits``: grid points of one support, from the Lipschitz-image
      bound with ``n = M`` coordinates bounded by ``r_M``
    """
    M, L = spec.M, spec.L_M
    arch_bits = math.log2(L) + (L - 1) * math.log2(M)
    support_bits = M * math.log2(2.0 * M * M * L)
    lip = spec.lipschitz()
    if M >= 2:
        cover, _ = lip_image_covering(M, spec.r_M, NormSpec.INF, lip, spec.gamma, M)
        grid_bits = cover.log2_size_upper
    else:
        grid_bits = lip_image_direct_bits(1, spec.r_M, NormSpec.INF, lip, spec.gamma, 1)
    total = arch_bits + support_bits + grid_bits
    return CoveringReport(
        eps=float(M) ** -spec.gamma,
        log2_size_upper=total,
        log2_size_lower=-math.inf,
        construction="relu_family_formula",
        parameters=spec.to_json() | {"lip": lip, "eta": spec.eta()},
        terms={"arch_bits": arch_bits, "support_bits": support_bits, "grid_bits": grid_bits,
               "total_bits": total},
    )


# -- brute force ------------------------------------------------------------

def _greedy_centers(P: np.ndarray, radius: float, q, shift: bool = False) -> np.ndarray:
    """Scan for the first unremoved point ``p`` and remove the ``radius`` ball around a center.

    The center is ``p`` itself, or ``p + radius e_1`` with ``shift``. Points
    must be sorted lexicographically for the shifted variant to make sense;
    it is optimal in dimension one.
    """
    alive = np.ones(len(P), dtype=bool)
    centers = []
    start = 0
    while True:
        remaining = np.flatnonzero(alive[start:])
        if remaining.size == 0:
            break
        i = start + int(remaining[0])
        c = P[i].copy()
        if shift:
            c[0] += radius
            if vector_norms((P[i] - c)[None], q)[0] > radius:
                c = P[i].copy()  # rounding pushed the seed point out of its ball
        centers.append(c)
        idx = np.flatnonzero(alive)
        dist = vector_norms(P[idx] - c, q)
        alive[idx[dist <= radius]] = False
        alive[i] = False
        start = i + 1
    return np.asarray(centers).reshape(len(centers), P.shape[1])


def _as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=np.float64)
    return P[:, None] if P.ndim == 1 else P


def lexsorted(points) -> np.ndarray:
    P = _as_points(points)
    return P[np.lexsort(P.T[::-1])]


def covering_certificate(points, centers, eps: float, q, chunk: int = 4096) -> float:
    """Largest distance from a point to its nearest center."""
    P, C = _as_points(points), _as_points(centers)
    worst = 0.0
    for s in range(0, len(P), chunk):
        block = P[s:s + chunk]
        diff = block[:, None, :] - C[None, :, :]
        d = vector_norms(diff.reshape(-1, P.shape[1]), q).reshape(len(block), len(C))
        worst = max(worst, float(d.min(axis=1).max()))
    return worst


def brute_force_cover(points, eps: float, q=NormSpec.INF) -> tuple[CoveringReport, np.ndarray]:
    """Greedy ``eps``-covering and greedy ``2 eps``-packing of a finite set.

    Points are scanned in lexicographic order; each center sits ``eps`` past
    the first uncovered point along the first axis. The covering size bounds
    the covering number from above; the packing (points pairwise farther than
    ``2 eps``) bounds it from below.
    """
    q = NormSpec.parse(q)
    P = _as_points(points)
    if len(P) == 0:
        raise HypothesisViolation("need at least one point")
    if len(P) > MAX_POINTS:
        raise HypothesisViolation(f"{len(P)} points exceeds the {MAX_POINTS} limit")
    if not eps > 0:
        raise HypothesisViolation(f"eps must be > 0, got {eps}")
    P = lexsorted(P)
    centers = _greedy_centers(P, eps, q, shift=True)
    packing = _greedy_centers(P, 2.0 * eps, q)
    worst = covering_certificate(P, centers, eps, q)
    if worst > eps:
        raise AssertionError(f"greedy covering failed its certificate ({worst} > {eps})")
    report = CoveringReport(
        eps=float(eps),
        log2_size_upper=math.log2(len(centers)),
        log2_size_lower=math.log2(len(packing)),
        construction="brute_force",
        parameters={"points": len(P), "n": P.shape[1], "q": str(q)},
        terms={"centers": len(centers), "packing": len(packing), "certificate_max_distance": worst},
    )
    return report, centers


def ball_points(n: int, r: float, step: float, q) -> np.ndarray:
    """Regular grid of spacing ``<= step`` on ``[-r, r]^n`` restricted to the ``q`` ball."""
    q = NormSpec.parse(q)
    per_axis = 2 * math.ceil(r / step) + 1
    axis = np.linspace(-r, r, per_axis)
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    P = np.stack([g.ravel() for g in grids], axis=1)
    return P[vector_norms(P, q) <= r * (1 + 1e-12)]
