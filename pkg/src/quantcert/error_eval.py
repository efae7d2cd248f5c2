"""Empirical estimates of ``||R_theta - R_theta'||`` on box domains.

Grid and Monte-Carlo sup estimates only ever see finitely many inputs, so
they are lower bounds of the true supremum. They are used to check that
certified upper bounds are never beaten and that witnesses reach their
closed-form values.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import HypothesisViolation, StructuralError
from .network import BoxDomain, NetworkParams, NormSpec, default_rng, realize_batch, vector_norms

MAX_GRID_POINTS = 10 ** 8
CHUNK = 1 << 15

LOWER_BOUND = "lower_bound_of_true_norm"
EXACT_ON_WITNESS = "exact_on_witness"


@dataclass(frozen=True)
class NormEstimate:
    value: float
    p: float
    q: str
    method: str  # grid | monte_carlo | analytic_maximizer
    resolution: int  # points per axis, or sample count
    direction: str
    stderr: float = 0.0

    CSV_COLUMNS = ("method", "p", "q", "resolution_or_samples", "value", "stderr", "direction")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["p"] = "inf" if math.isinf(self.p) else self.p
        return doc

    def csv_row(self) -> dict:
        return {"method": self.method, "p": "inf" if math.isinf(self.p) else self.p,
                "q": self.q, "resolution_or_samples": self.resolution, "value": self.value,
                "stderr": self.stderr, "direction": self.direction}


def _check_pair(theta: NetworkParams, theta_prime: NetworkParams, box: BoxDomain) -> None:
    if theta.arch != theta_prime.arch:
        raise StructuralError(
            f"architecture mismatch: {theta.arch.widths} vs {theta_prime.arch.widths}")
    box.check_network(theta.arch)


def pointwise_gap(theta: NetworkParams, theta_prime: NetworkParams, X, q) -> np.ndarray:
    """``||R_theta(x) - R_theta'(x)||_q`` for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return vector_norms(realize_batch(theta, X) - realize_batch(theta_prime, X), q)


def grid_points(box: BoxDomain, resolution: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows ``start:stop`` of the regular grid (corners included), C order."""
    axis = np.linspace(-box.D, box.D, resolution)
    total = resolution ** box.d
    stop = total if stop is None else min(stop, total)
    idx = np.unravel_index(np.arange(start, stop), (resolution,) * box.d)
    return np.stack([axis[i] for i in idx], axis=1)


def sup_norm_gap(theta: NetworkParams, theta_prime: NetworkParams, box: BoxDomain, q,
                 resolution: int, include=None) -> NormEstimate:
    """Max of the pointwise gap over a regular grid with ``resolution`` points per axis.

    ``include`` adds extra inputs (e.g. a known maximizer) to the scan.
    """
    _check_pair(theta, theta_prime, box)
    q = NormSpec.parse(q)
    if resolution < 2:
        raise HypothesisViolation(f"grid resolution must be >= 2, got {resolution}")
    total = resolution ** box.d
    if total > MAX_GRID_POINTS:
        raise HypothesisViolation(
            f"grid of {resolution}^{box.d} = {total} points exceeds the {MAX_GRID_POINTS} limit; "
            "reduce the resolution or the input dimension")
    best = 0.0
    for start in range(0, total, CHUNK):
        X = grid_points(box, resolution, start, start + CHUNK)
        best = max(best, float(pointwise_gap(theta, theta_prime, X, q).max()))
    if include is not None:
        extra = np.atleast_2d(np.asarray(include, dtype=np.float64))
        if np.any(np.abs(extra) > box.D):
            raise HypothesisViolation("extra scan points must lie in the box")
        best = max(best, float(pointwise_gap(theta, theta_prime, extra, q).max()))
    return NormEstimate(best, math.inf, str(q), "grid", resolution, LOWER_BOUND)


def gap_at(theta: NetworkParams, theta_prime: NetworkParams, x, q) -> NormEstimate:
    """Gap at a single input, typically the closed-form maximizer of a witness."""
    q = NormSpec.parse(q)
    value = float(pointwise_gap(theta, theta_prime, np.asarray(x, dtype=np.float64)[None, :], q)[0])
    return NormEstimate(value, math.inf, str(q), "analytic_maximizer", 1, EXACT_ON_WITNESS)


def lp_norm_gap(theta: NetworkParams, theta_prime: NetworkParams, box: BoxDomain, p: float, q,
                samples: int, seed: int = 42) -> NormEstimate:
    """Monte-Carlo ``L^p`` norm ``((2D)^d mean ||gap||_q^p)^(1/p)`` with a delta-method stderr."""
    _check_pair(theta, theta_prime, box)
    q = NormSpec.parse(q)
    p = float(p)
    if not 1 <= p < math.inf:
        raise HypothesisViolation(f"lp_norm_gap needs 1 <= p < inf, got {p}")
    if samples < 1:
        raise HypothesisViolation(f"samples must be >= 1, got {samples}")
    rng = default_rng(seed)
    total = 0.0
    total_sq = 0.0
    for start in range(0, samples, CHUNK):
        n = min(CHUNK, samples - start)
        X = rng.uniform(-box.D, box.D, size=(n, box.d))
        g = pointwise_gap(theta, theta_prime, X, q) ** p
        total += float(g.sum())
        total_sq += float((g * g).sum())
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
    integral = box.volume * mean
    value = integral ** (1.0 / p)
    if integral > 0:
        stderr = box.volume * math.sqrt(var / samples) * value / (p * integral)
    else:
        stderr = 0.0
    return NormEstimate(value, p, str(q), "monte_carlo", samples, "estimate", stderr)
