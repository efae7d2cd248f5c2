"""Feedforward ReLU networks: architectures, parameters, realization and norms.

All objects are immutable. Arrays held by :class:`NetworkParams` are
copied on construction and flagged read-only.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import HypothesisViolation, SchemaError, StructuralError, UnsupportedRegime

SPECTRAL_RTOL = 1e-12
SPECTRAL_MAX_ITER = 10_000
SVD_MAX_DIM = 64
MEMBERSHIP_RTOL = 1e-12


class NormSpec(enum.Enum):
    ONE = "1"
    TWO = "2"
    INF = "inf"
    FRO = "fro"
    MAX = "max"

    @classmethod
    def parse(cls, value) -> "NormSpec":
        if isinstance(value, NormSpec):
            return value
        key = str(value).strip().lower()
        aliases = {"1": cls.ONE, "1.0": cls.ONE, "2": cls.TWO, "2.0": cls.TWO,
                   "inf": cls.INF, "infinity": cls.INF, "∞": cls.INF,
                   "fro": cls.FRO, "frobenius": cls.FRO, "f": cls.FRO,
                   "max": cls.MAX}
        if key not in aliases:
            raise ValueError(f"unknown norm {value!r}; expected one of 1, 2, inf, fro, max")
        return aliases[key]

    @property
    def vector_exponent(self) -> float:
        """Exponent of the vector norm paired with this matrix norm."""
        return {NormSpec.ONE: 1.0, NormSpec.TWO: 2.0, NormSpec.INF: math.inf,
                NormSpec.FRO: 2.0, NormSpec.MAX: math.inf}[self]

    @property
    def is_operator(self) -> bool:
        return self in (NormSpec.ONE, NormSpec.TWO, NormSpec.INF)

    def __str__(self) -> str:
        return self.value


def dim_power(n: float, q) -> float:
    """``n ** (1/q)`` with the convention ``1/inf = 0``."""
    exponent = NormSpec.parse(q).vector_exponent if not isinstance(q, (int, float)) else q
    return 1.0 if math.isinf(exponent) else float(n) ** (1.0 / exponent)


@dataclass(frozen=True)
class Architecture:
    widths: tuple[int, ...]

    def __init__(self, widths: Sequence[int]):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2:
            raise StructuralError("an architecture needs at least input and output widths")
        if any(w < 1 for w in widths):
            raise StructuralError(f"all widths must be >= 1, got {widths}")
        object.__setattr__(self, "widths", widths)

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def d_in(self) -> int:
        return self.widths[0]

    @property
    def d_out(self) -> int:
        return self.widths[-1]

    def width(self) -> int:
        return max(self.widths)

    def min_width(self) -> int:
        return min(self.widths)

    def parameter_dim(self) -> int:
        n = self.widths
        return sum(n[l] * (n[l - 1] + 1) for l in range(1, len(n)))

    def truncated(self, depth: int) -> "Architecture":
        return Architecture(self.widths[: depth + 1])


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    if not np.all(np.isfinite(out)):
        raise StructuralError("parameters must be finite")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """Parameters ``(W_1..W_L, b_1..b_L)`` of a ReLU network."""

    arch: Architecture
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __init__(self, arch: Architecture, weights, biases):
        weights = tuple(_frozen(w) for w in weights)
        biases = tuple(_frozen(b) for b in biases)
        if len(weights) != arch.depth or len(biases) != arch.depth:
            raise StructuralError(
                f"expected {arch.depth} layers, got {len(weights)} weights / {len(biases)} biases")
        n = arch.widths
        for l, (w, b) in enumerate(zip(weights, biases), start=1):
            if w.shape != (n[l], n[l - 1]):
                raise StructuralError(f"W_{l} has shape {w.shape}, expected {(n[l], n[l - 1])}")
            if b.shape != (n[l],):
                raise StructuralError(f"b_{l} has shape {b.shape}, expected {(n[l],)}")
        object.__setattr__(self, "arch", arch)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @classmethod
    def zeros(cls, arch: Architecture) -> "NetworkParams":
        n = arch.widths
        return cls(arch, [np.zeros((n[l], n[l - 1])) for l in range(1, len(n))],
                   [np.zeros(n[l]) for l in range(1, len(n))])

    @property
    def depth(self) -> int:
        return self.arch.depth

    def flatten(self) -> np.ndarray:
        """All weights (row-major) followed by all biases."""
        parts = [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, arch: Architecture, vector) -> "NetworkParams":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (arch.parameter_dim(),):
            raise StructuralError(
                f"vector has shape {vector.shape}, expected ({arch.parameter_dim()},)")
        n = arch.widths
        weights, biases, pos = [], [], 0
        for l in range(1, len(n)):
            size = n[l] * n[l - 1]
            weights.append(vector[pos:pos + size].reshape(n[l], n[l - 1]))
            pos += size
        for l in range(1, len(n)):
            biases.append(vector[pos:pos + n[l]])
            pos += n[l]
        return cls(arch, weights, biases)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.flatten()))) if self.arch.parameter_dim() else 0.0

    def truncated(self, depth: int) -> "NetworkParams":
        """The sub-network made of the first ``depth`` layers."""
        if not 1 <= depth <= self.depth:
            raise StructuralError(f"cannot truncate depth {self.depth} network to {depth}")
        return NetworkParams(self.arch.truncated(depth), self.weights[:depth], self.biases[:depth])

    def map(self, fn) -> "NetworkParams":
        """Apply ``fn`` to every weight matrix and bias vector."""
        return NetworkParams(self.arch, [fn(w) for w in self.weights], [fn(b) for b in self.biases])

    def __sub__(self, other: "NetworkParams") -> "NetworkParams":
        _check_same_arch(self, other)
        return NetworkParams(self.arch, [a - b for a, b in zip(self.weights, other.weights)],
                             [a - b for a, b in zip(self.biases, other.biases)])

    def distance_inf(self, other: "NetworkParams") -> float:
        _check_same_arch(self, other)
        return float(np.max(np.abs(self.flatten() - other.flatten())))

    def equals(self, other: "NetworkParams") -> bool:
        return self.arch == other.arch and np.array_equal(self.flatten(), other.flatten())


def _check_same_arch(a: NetworkParams, b: NetworkParams) -> None:
    if a.arch != b.arch:
        raise StructuralError(f"architecture mismatch: {a.arch.widths} vs {b.arch.widths}")


@dataclass(frozen=True)
class BoxDomain:
    """The cube ``[-D, D]^d`` with Lebesgue measure."""

    d: int
    D: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise StructuralError(f"box dimension must be a positive integer, got {self.d}")
        if not (self.D > 0 and math.isfinite(self.D)):
            raise HypothesisViolation(f"box half-width must be finite and > 0, got {self.D}")

    @property
    def volume(self) -> float:
        return (2.0 * self.D) ** self.d

    def check_network(self, arch: Architecture) -> None:
        if arch.d_in != self.d:
            raise StructuralError(f"box dimension {self.d} != network input dimension {arch.d_in}")


# -- evaluation -------------------------------------------------------------

def _affine(w: np.ndarray, b: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Column-by-column accumulation: each output is summed left to right
    # over the input index, then the bias is added. Avoids BLAS reordering.
    out = w[:, 0] * y[:, 0:1]
    for j in range(1, w.shape[1]):
        out = out + w[:, j] * y[:, j:j + 1]
    return out + b


def _forward(theta: NetworkParams, X: np.ndarray, keep_preactivations: bool = False):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != theta.arch.d_in:
        raise StructuralError(f"inputs must have shape (n, {theta.arch.d_in}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise StructuralError("inputs must be finite")
    pre = []
    y = X
    for l, (w, b) in enumerate(zip(theta.weights, theta.biases), start=1):
        z = _affine(w, b, y)
        if keep_preactivations:
            pre.append(z)
        y = z if l == theta.depth else np.maximum(z, 0.0)
    return (y, pre) if keep_preactivations else y


def realize_batch(theta: NetworkParams, X) -> np.ndarray:
    """Evaluate the realization on every row of ``X`` (shape ``(n, N_0)``)."""
    return _forward(theta, X)


def realize(theta: NetworkParams, x) -> np.ndarray:
    """Evaluate the realization at a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise StructuralError(f"x must be a vector, got shape {x.shape}")
    return _forward(theta, x[None, :])[0]


def partial_realizations(theta: NetworkParams, X) -> list[np.ndarray]:
    """Outputs of the truncated networks ``theta_1..theta_L`` (no final ReLU)."""
    _, pre = _forward(theta, X, keep_preactivations=True)
    return pre


def activation_pattern(theta: NetworkParams, X) -> np.ndarray:
    """Boolean sign pattern of all hidden pre-activations, one row per input."""
    _, pre = _forward(theta, X, keep_preactivations=True)
    hidden = pre[:-1]
    if not hidden:
        return np.zeros((np.asarray(X).shape[0], 0), dtype=bool)
    return np.concatenate([z > 0 for z in hidden], axis=1)


# -- norms ------------------------------------------------------------------

def vector_norm(v, q) -> float:
    """``||v||_q`` for the vector exponent paired with ``q``."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        return 0.0
    return float(np.linalg.norm(v, ord=NormSpec.parse(q).vector_exponent))


def vector_norms(V, q) -> np.ndarray:
    """Row-wise ``||v||_q`` for a 2-D array."""
    V = np.asarray(V, dtype=np.float64)
    return np.linalg.norm(V, ord=NormSpec.parse(q).vector_exponent, axis=1)


def spectral_norm_power(M, rtol: float = SPECTRAL_RTOL, max_iter: int = SPECTRAL_MAX_ITER) -> float:
    """Largest singular value by power iteration on ``M^T M``.

    The start vector is the normalized all-ones vector, so the result is
    deterministic. If that start happens to be orthogonal to the dominant
    subspace the iteration converges to a smaller singular value; callers
    needing a guaranteed value on small matrices use the SVD path.
    """
    M = np.asarray(M, dtype=np.float64)
    gram = M.T @ M
    v = np.ones(gram.shape[0]) / math.sqrt(gram.shape[0])
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / norm_w
        if abs(lam_new - lam) <= rtol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return math.sqrt(max(lam, 0.0))


def operator_norm(M, q) -> float:
    """Matrix norm selected by ``q``.

    ``1``: max column abs sum; ``inf``: max row abs sum; ``2``: largest
    singular value; ``fro``: entrywise l2; ``max``: largest abs entry.
    """
    q = NormSpec.parse(q)
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.size == 0:
        raise StructuralError(f"operator_norm needs a non-empty matrix, got shape {M.shape}")
    A = np.abs(M)
    if q is NormSpec.ONE:
        return float(A.sum(axis=0).max())
    if q is NormSpec.INF:
        return float(A.sum(axis=1).max())
    if q is NormSpec.FRO:
        return float(np.sqrt((M * M).sum()))
    if q is NormSpec.MAX:
        return float(A.max())
    if max(M.shape) <= SVD_MAX_DIM:
        return float(np.linalg.svd(M, compute_uv=False)[0])
    return spectral_norm_power(M)


@dataclass(frozen=True)
class MembershipReport:
    member: bool
    q: NormSpec
    r: float
    layers: tuple[tuple[float, float], ...]  # (matrix norm of W_l, vector norm of b_l)

    def __bool__(self) -> bool:
        return self.member

    def max_norm(self) -> float:
        return max((max(w, b) for w, b in self.layers), default=0.0)


def layer_norms(theta: NetworkParams, q) -> tuple[tuple[float, float], ...]:
    q = NormSpec.parse(q)
    return tuple((operator_norm(w, q), vector_norm(b, q)) for w, b in zip(theta.weights, theta.biases))


def param_set_membership(theta: NetworkParams, q, r: float, rtol: float = MEMBERSHIP_RTOL) -> MembershipReport:
    """Whether every layer has matrix norm and bias norm at most ``r``.

    ``rtol`` absorbs last-ulp error of the spectral norm so that scaled
    identities of norm exactly ``r`` are accepted.
    """
    q = NormSpec.parse(q)
    if r < 0:
        raise HypothesisViolation(f"radius must be >= 0, got {r}")
    layers = layer_norms(theta, q)
    limit = r * (1.0 + rtol)
    ok = all(w <= limit and b <= limit for w, b in layers)
    return MembershipReport(ok, q, float(r), layers)


def smallest_radius(theta: NetworkParams, q) -> float:
    """Smallest ``r`` with ``theta`` in the ``q`` parameter set of radius ``r``."""
    return param_set_membership(theta, q, 0.0).max_norm()


def sample_member(arch: Architecture, q, r: float, rng: np.random.Generator,
                  spread: float = 1.0, max_tries: int = 10_000) -> NetworkParams:
    """Draw a random element of the parameter set of radius ``r``.

    Entries are uniform in ``[-s, s]`` with ``s = spread * r / W`` (``spread *
    r`` for the max-norm), then membership is checked. With ``spread <= 1``
    every draw is accepted since the box lies inside the set.
    """
    q = NormSpec.parse(q)
    half = spread * r if q is NormSpec.MAX else spread * r / arch.width()
    for _ in range(max_tries):
        vec = rng.uniform(-half, half, size=arch.parameter_dim())
        theta = NetworkParams.unflatten(arch, vec)
        if param_set_membership(theta, q, r, rtol=0.0):
            return theta
    raise RuntimeError(f"rejection sampling failed after {max_tries} draws")


def default_rng(seed: int = 42) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(seed))


# -- domain constants -------------------------------------------------------

def linf_box_moment(p: float, box: BoxDomain) -> float:
    """``(int_{[-D,D]^d} (||x||_inf + 1)^p dx)^(1/p)`` by a 1-D reduction.

    The measure of ``{||x||_inf <= t}`` is ``(2t)^d`` so the integral equals
    ``2^d d int_0^D (t+1)^p t^(d-1) dt``.
    """
    d, D = box.d, box.D
    val, _ = integrate.quad(lambda t: (t + 1.0) ** p * t ** (d - 1), 0.0, D,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return (2.0 ** d * d * val) ** (1.0 / p)


def _cubature_moment(p: float, box: BoxDomain, exponent: float) -> float:
    if box.d > 4:
        raise HypothesisViolation(
            f"cubature for the domain constant is limited to d <= 4 (got d={box.d})")
    D = box.D

    def integrand(*x):
        return (np.linalg.norm(x, ord=exponent) + 1.0) ** p

    val, _ = integrate.nquad(integrand, [(0.0, D)] * box.d,
                             opts={"epsabs": 0.0, "epsrel": 1e-10, "limit": 100})
    return (2.0 ** box.d * val) ** (1.0 / p)


def domain_constant(p: float, box: BoxDomain, q) -> float:
    """Constant ``c`` multiplying ``W L^2 r^(L-1)`` in the Lipschitz upper bound.

    * ``p = inf``: ``D d^(1/q) + 1``
    * ``p < inf`` and ``q = inf``: ``(D + 1)(2D)^(d/p)``
    * ``p < inf`` otherwise: ``(int (||x||_q + 1)^p dx)^(1/p)`` by cubature
    """
    q = NormSpec.parse(q)
    if not q.is_operator:
        raise UnsupportedRegime(f"domain_constant is defined for q in {{1, 2, inf}}, got {q}")
    p = float(p)
    if p < 1:
        raise HypothesisViolation(f"exponent p must be in [1, inf], got {p}")
    if math.isinf(p):
        return box.D * dim_power(box.d, q) + 1.0
    if q is NormSpec.INF:
        return (box.D + 1.0) * (2.0 * box.D) ** (box.d / p)
    return _cubature_moment(p, box, q.vector_exponent)


# -- JSON -------------------------------------------------------------------

def network_to_json(theta: NetworkParams) -> dict:
    return {
        "widths": list(theta.arch.widths),
        "layers": [{"W": w.tolist(), "b": b.tolist()} for w, b in zip(theta.weights, theta.biases)],
    }


def _require(doc: dict, key: str, where: str = "network"):
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: expected an object, got {type(doc).__name__}")
    if key not in doc:
        raise SchemaError(f"{where}: missing required field {key!r}")
    return doc[key]


def _numeric(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise SchemaError(f"{where}: non-finite value {value!r}")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where}: expected an integer, got {value!r}")
    return value


def _parse_layers(doc: dict, scalar):
    widths = _require(doc, "widths")
    layers = _require(doc, "layers")
    if not isinstance(widths, list) or not all(isinstance(w, int) and not isinstance(w, bool) for w in widths):
        raise SchemaError("network: 'widths' must be a list of integers")
    if not isinstance(layers, list):
        raise SchemaError("network: 'layers' must be a list")
    try:
        arch = Architecture(widths)
    except StructuralError as exc:
        raise SchemaError(f"network: {exc}") from exc
    if len(layers) != arch.depth:
        raise SchemaError(f"network: {len(layers)} layers for {arch.depth} weight matrices")
    weights, biases = [], []
    for l, layer in enumerate(layers, start=1):
        where = f"layers[{l - 1}]"
        W = _require(layer, "W", where)
        b = _require(layer, "b", where)
        extra = set(layer) - {"W", "b"}
        if extra:
            raise SchemaError(f"{where}: unexpected fields {sorted(extra)}")
        n_out, n_in = arch.widths[l], arch.widths[l - 1]
        if not isinstance(W, list) or len(W) != n_out or not all(isinstance(row, list) and len(row) == n_in for row in W):
            raise SchemaError(f"{where}.W: expected {n_out} rows of {n_in} entries")
        if not isinstance(b, list) or len(b) != n_out:
            raise SchemaError(f"{where}.b: expected {n_out} entries")
        weights.append([[scalar(v, f"{where}.W") for v in row] for row in W])
        biases.append([scalar(v, f"{where}.b") for v in b])
    return arch, weights, biases


def network_from_json(doc: dict) -> NetworkParams:
    extra = set(doc) - {"widths", "layers"} if isinstance(doc, dict) else set()
    if extra:
        raise SchemaError(f"network: unexpected fields {sorted(extra)}")
    arch, weights, biases = _parse_layers(doc, _numeric)
    n = arch.widths
    weights = [np.array(w, dtype=np.float64).reshape(n[l + 1], n[l]) for l, w in enumerate(weights)]
    return NetworkParams(arch, weights, biases)


def quantized_to_json(theta: NetworkParams, eta: float, grid_bound: float) -> dict:
    """Grid network: integer indices ``k`` with coordinate value ``k * eta``."""
    def indices(a: np.ndarray):
        k = np.rint(a / eta)
        if not np.array_equal(k * eta, a):
            raise StructuralError("parameters are not on the grid eta*Z")
        # Python ints: tiny steps can push indices beyond the int64 range.
        return [[int(v) for v in row] for row in k] if k.ndim == 2 else [int(v) for v in k]

    return {
        "eta": float(eta),
        "grid_bound": None if math.isinf(grid_bound) else float(grid_bound),
        "widths": list(theta.arch.widths),
        "layers": [{"W": indices(w), "b": indices(b)} for w, b in zip(theta.weights, theta.biases)],
    }


def quantized_from_json(doc: dict) -> tuple[NetworkParams, float, float]:
    extra = set(doc) - {"widths", "layers", "eta", "grid_bound"} if isinstance(doc, dict) else set()
    if extra:
        raise SchemaError(f"quantized network: unexpected fields {sorted(extra)}")
    eta = _numeric(_require(doc, "eta", "quantized network"), "eta")
    if eta <= 0:
        raise SchemaError("quantized network: 'eta' must be > 0")
    bound = _require(doc, "grid_bound", "quantized network")
    bound = math.inf if bound is None else _numeric(bound, "grid_bound")
    arch, weights, biases = _parse_layers(doc, _integer)
    n = arch.widths
    weights = [np.array(w, dtype=np.float64).reshape(n[l + 1], n[l]) * eta for l, w in enumerate(weights)]
    biases = [np.array(b, dtype=np.float64) * eta for b in biases]
    return NetworkParams(arch, weights, biases), eta, bound


def is_quantized_document(doc: dict) -> bool:
    return isinstance(doc, dict) and "eta" in doc
