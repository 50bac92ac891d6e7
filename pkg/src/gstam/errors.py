"""Exception hierarchy shared by all gstam modules."""


class GstamError(Exception):
    """Base class for every error raised by gstam."""


class DimensionError(GstamError, ValueError):
    """Operand shapes do not agree."""


class ConfigError(GstamError, ValueError):
    """Invalid configuration value or key."""


class LabelError(GstamError, IndexError):
    """Class label outside the valid range of its branch."""


class GraphError(GstamError, RuntimeError):
    """Misuse of the differentiation graph (non-scalar root, reused graph)."""


class NonFiniteError(GstamError, FloatingPointError):
    """A tensor acquired a NaN or infinite value."""


class ParseError(GstamError, ValueError):
    """A data or config file could not be parsed."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class EvaluationError(GstamError, ValueError):
    """Evaluation requested on an empty or degenerate sample set."""


class TrainingError(GstamError, RuntimeError):
    """Training diverged (non-finite loss or parameters)."""
