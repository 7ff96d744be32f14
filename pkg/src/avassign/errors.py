"""Exception types shared across the package."""


class InvalidFrame(ValueError):
    """A frame-level graph was built from inconsistent nodes."""


class InvalidWindow(ValueError):
    """A temporal window was built from out-of-order frames."""


class GraphError(ValueError):
    """A graph violates a structural contract (dangling edge, isolated node)."""


class ShapeError(ValueError):
    """Tensor shapes do not agree."""


class EmptyBatch(ValueError):
    """An operation that normalizes over rows received zero rows."""


class LabelError(ValueError):
    """A supervision label is outside the supported class set."""


class NumericsError(ArithmeticError):
    """A non-finite value appeared where finite numbers are required."""


class ConfigError(ValueError):
    """A configuration is inconsistent or incompatible with an artifact."""


class ParseError(ValueError):
    """A serialized artifact could not be decoded."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UndefinedMetric(ValueError):
    """A metric has no defined value on the given inputs (e.g. no positives)."""
