"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`QUniqueError`
so callers (and the CLI) can map failures to exit codes.
"""


class QUniqueError(Exception):
    """Base class for all library errors."""

    exit_code = 4


class UsageError(QUniqueError, ValueError):
    """Bad arguments: wrong dimension, empty method set, malformed flags."""

    exit_code = 2


class PreconditionError(UsageError):
    """An operation was called outside its documented domain."""


class ModelDefinitionError(QUniqueError, ValueError):
    """The model produced something that is not a conservative Q-matrix row."""

    exit_code = 3


class RateOverflowError(ModelDefinitionError):
    """A rate left the float64 range."""


class EvaluationError(ModelDefinitionError):
    """A test function or expression could not be evaluated at a state."""


class ResourceError(QUniqueError, RuntimeError):
    """A window or coordinate exceeded a configured size limit."""

    exit_code = 2


class DSLSyntaxError(ModelDefinitionError):
    """Syntax error in a ``.qm`` model or certificate file."""

    def __init__(self, message, line, column, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(sorted(set(expected)))
        detail = f"line {line}, column {column}: {message}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)
