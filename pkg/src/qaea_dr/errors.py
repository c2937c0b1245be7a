"""Exception hierarchy shared across the pipeline.

ValidationError and its subclasses map to CLI exit code 1, GatewayError
and its subclasses to exit code 2; anything else is an internal error (3).
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Malformed input data, bad arguments, or violated invariants."""


class JsonExtractionError(ValidationError):
    """No parseable JSON value could be extracted from a model output."""


class StoreLoadError(ValidationError):
    """A persisted index file is corrupt or truncated."""

    def __init__(self, message: str, offset: int | None = None) -> None:
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class GatewayError(RuntimeError):
    """Base class for model-backend failures."""


class TransportError(GatewayError):
    """Network-level failure that persisted through all retries."""


class BackendError(GatewayError):
    """The backend answered with a non-success status."""

    def __init__(self, message: str, status: int | None = None, body: str = "") -> None:
        super().__init__(message)
        self.status = status
        self.body_excerpt = body[:500]


class EmptyOutputError(BackendError):
    """The backend returned an empty completion."""
