"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Shapes or architectures do not line up."""


class HypothesisViolation(ValueError):
    """A numeric precondition of a bound is not met (e.g. r < 1)."""


class UnsupportedRegime(HypothesisViolation):
    """The requested (p, q) combination has no certified constant."""


class SchemaError(ValueError):
    """A JSON document does not follow the expected layout."""
