"""Exception types shared across the package."""


class BppdError(Exception):
    """Base class for all package errors."""


class ParameterError(BppdError, ValueError):
    """Invalid user-facing parameter (distance, rounds, probabilities, ...)."""


class StructureError(BppdError):
    """Malformed circuit or model structure (missing annotations, empty model)."""


class DecompositionError(BppdError):
    """A hyperedge mechanism cannot be decomposed into known graphlike edges."""

    def __init__(self, column: int, message: str):
        super().__init__(f"column {column}: {message}")
        self.column = column


class DecodeError(BppdError):
    """Decoding failed (e.g. a defect cannot be matched to anything)."""


class EstimationError(BppdError):
    """Threshold estimation failed (no crossing, not enough data)."""
