"""Certified uniform quantization of ReLU networks."""
from .errors import HypothesisViolation, SchemaError, StructuralError, UnsupportedRegime
from .network import Architecture, BoxDomain, NetworkParams, NormSpec, realize, realize_batch

__all__ = [
    "Architecture",
    "BoxDomain",
    "HypothesisViolation",
    "NetworkParams",
    "NormSpec",
    "SchemaError",
    "StructuralError",
    "UnsupportedRegime",
    "realize",
    "realize_batch",
]
__version__ = "0.1.0"
