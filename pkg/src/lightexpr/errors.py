"""Exception hierarchy.

Validation-type errors map to CLI exit code 1, runtime errors to exit code 2.
"""


class LightExprError(Exception):
    """Base class for all package errors."""


class ValidationError(LightExprError, ValueError):
    """Input failed a precondition check."""


class BoundsError(ValidationError, IndexError):
    pass


class ManifestParseError(ValidationError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no


class EmptyInputError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class DegenerateGeometryError(ValidationError):
    pass


class DegenerateInputError(ValidationError):
    """Zero-variance or zero-norm vectors where a direction is required."""


class AlignmentError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class CheckpointError(LightExprError):
    """Checkpoint file unreadable or incompatible with the requested network."""


class DivergenceError(LightExprError, FloatingPointError):
    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class NumericalError(LightExprError, ArithmeticError):
    pass
