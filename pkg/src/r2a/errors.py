"""Exception hierarchy shared across the engine.

The CLI maps these onto exit codes: I/O errors exit 1, validation and
format errors exit 2, transport and backend errors exit 3.
"""


class R2AError(Exception):
    """Base class for all engine errors."""


class ValidationError(R2AError):
    """An argument or input value violates a precondition."""


class FormatError(R2AError):
    """A persisted file fails header or payload validation."""


class BudgetError(R2AError):
    """A prompt cannot fit the token budget even with an empty context."""


class TransportError(R2AError):
    """The scoring backend could not be reached."""


class BackendError(R2AError):
    """The scoring backend answered with an error response."""
