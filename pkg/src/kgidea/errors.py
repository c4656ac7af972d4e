"""Exception types shared across the package."""

from __future__ import annotations


class KgError(Exception):
    """Base class for every error this package raises on purpose."""


class ValidationError(KgError):
    """The caller violated an argument contract (empty label, bad range, ...)."""


class IntegrityError(KgError):
    """A structural invariant is broken (dangling edge, missing embedding, ...)."""


class NotFoundError(KgError):
    """A node, chunk, or index key lookup failed."""


class GraphParseError(KgError):
    """A persisted graph file is malformed.  Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class ZeroVectorError(KgError):
    """A zero-norm vector reached a similarity operation."""


class TransportError(KgError):
    """A backend call failed for network/server reasons; safe to retry."""

    def __init__(self, message: str, cause: Exception | None = None):
        super().__init__(message)
        self.cause = cause


class ScriptError(KgError):
    """A scripted backend was asked for more responses than it holds."""


class ExtractionFailedError(KgError):
    """Triple extraction stayed unparseable after all attempts."""

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response


class StageError(KgError):
    """An agent stage could not produce a usable output."""

    def __init__(self, stage: str, message: str, raw_response: str = ""):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.raw_response = raw_response


class JudgeError(KgError):
    """The judge response could not be parsed into criterion scores."""

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response
