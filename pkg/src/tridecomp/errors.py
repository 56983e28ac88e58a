"""Exception types shared across the package."""


class TridecompError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatchError(TridecompError):
    """Operands live on incompatible spaces."""


class InvalidStateError(TridecompError):
    """A state, matrix, or parameter violates a documented invariant."""


class CapacityError(TridecompError):
    """A dense materialization would exceed the configured ceiling."""


class PreconditionError(TridecompError):
    """A documented precondition failed; the message names the inequality."""


class SchemaError(TridecompError):
    """A file does not follow the documented JSON schema."""


class VerificationError(TridecompError):
    """A bound or matching that is guaranteed to hold was violated."""
