"""
Exception hierarchy for mpcmp.

Every error carries an optional hint for the operator and a retryable flag,
so the CLI can render a structured diagnostic without knowing the subclass.
"""


class MpcError(Exception):
    """Base exception for all protocol, field and configuration failures."""

    def __init__(
        self,
        message: str,
        hint: str = None,
        retryable: bool = False,
    ):
        super().__init__(message)
        self.hint = hint
        self.retryable = retryable


class FieldError(MpcError):
    """Raised for invalid field parameters or elements."""

    pass


class ModulusMismatchError(FieldError):
    """Raised when elements of different fields are combined."""

    pass


class FieldDivisionError(FieldError, ZeroDivisionError):
    """Raised when inverting zero."""

    pass


class EncodingError(MpcError):
    """Raised when a secret or bit-string does not fit its encoding."""

    pass


class ConfigurationError(MpcError):
    """Raised when session parameters violate a protocol precondition."""

    pass


class ReconstructionError(MpcError):
    """Raised when a share set cannot be interpolated."""

    pass


class ProtocolError(MpcError):
    """Raised when a protocol reaches a state its inputs should exclude."""

    pass


class RetryExhaustedError(ProtocolError):
    """Raised when the nonzero mask could not be drawn within the retry cap."""

    pass


class TransportError(MpcError):
    """Raised for delivery failures; the round may succeed if rerun."""

    def __init__(self, message: str, hint: str = None):
        super().__init__(message, hint=hint, retryable=True)


class TranscriptError(MpcError):
    """Raised when a transcript file violates the record schema."""

    pass


class AuditParameterError(MpcError):
    """Raised when audit parameters are too large to enumerate or invalid."""

    pass


def create_error_response(error: MpcError) -> dict:
    """Create structured error response from exception."""
    return {
        "error": True,
        "error_type": type(error).__name__,
        "message": str(error),
        "retryable": getattr(error, "retryable", False),
        "hint": getattr(error, "hint", None),
    }
