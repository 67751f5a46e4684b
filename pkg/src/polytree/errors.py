"""Exception types shared across the package."""


class PolytreeError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(PolytreeError, ValueError):
    """Feature vector length does not match the model's expert weights."""


class TreeStructureError(PolytreeError, ValueError):
    """A tree violates a structural invariant (missing child, bad leaf, ...)."""


class UnfinalizedLeafError(PolytreeError, RuntimeError):
    """Prediction was requested from a leaf whose parameters are unset."""


class NumericError(PolytreeError, ArithmeticError):
    """A non-finite value appeared during objective or optimizer evaluation."""


class DegenerateSplitError(PolytreeError, ValueError):
    """No usable threshold exists (all candidate probabilities identical)."""


class DataError(PolytreeError, ValueError):
    """A dataset violates its invariants (empty, non-finite, bad labels)."""


class ParseError(DataError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class MetricUndefinedError(PolytreeError, ValueError):
    """The requested metric is undefined for the given data (e.g. AUC with one class)."""


class InvalidModelError(PolytreeError, ValueError):
    """A persisted model document failed invariant validation on load."""
