"""Exception types shared across the engine.

Errors are raised for contract violations; recoverable per-item problems
(duplicate file names, ungrounded quotes, ...) travel as ``Issue`` values
instead, so validation can report everything at once.
"""

from dataclasses import dataclass, field


class EwsError(Exception):
    """Base class for all engine errors."""


# --- interchange ---------------------------------------------------------

class MalformedJson(EwsError):
    pass


class SchemaViolation(EwsError):
    pass


# --- ports ---------------------------------------------------------------

class LlmUnavailable(EwsError):
    pass


class EmptyCompletion(EwsError):
    pass


class MissingScriptEntry(EwsError):
    pass


class TimeoutError_(EwsError):
    """Transport timed out after all retry attempts."""


class HttpStatusError(EwsError):
    def __init__(self, code: int, detail: str = ""):
        super().__init__(f"HTTP {code}" + (f": {detail}" if detail else ""))
        self.code = code


class DecodeError(EwsError):
    pass


class AuthError(EwsError):
    pass


class EmbedderFailure(EwsError):
    def __init__(self, chunk_id: str, detail: str = ""):
        super().__init__(f"embedder failed for {chunk_id!r}" + (f": {detail}" if detail else ""))
        self.chunk_id = chunk_id


class ClassifierFailure(EwsError):
    def __init__(self, chunk_id: str, detail: str = ""):
        super().__init__(f"classifier failed for {chunk_id!r}" + (f": {detail}" if detail else ""))
        self.chunk_id = chunk_id


# --- index store ---------------------------------------------------------

class UnknownChunk(EwsError):
    pass


class DimensionMismatch(EwsError):
    pass


class IndexIoError(EwsError):
    pass


class VersionMismatch(EwsError):
    pass


class CorruptIndex(EwsError):
    pass


# --- retrieval -----------------------------------------------------------

class DuplicateWithinSystem(EwsError):
    pass


# --- extraction ----------------------------------------------------------

class Unparseable(EwsError):
    pass


class AmbiguousMagnitude(EwsError):
    pass


class EmptyPlan(EwsError):
    pass


# --- evaluation ----------------------------------------------------------

class MissingColumn(EwsError):
    pass


class BadLabel(EwsError):
    pass


class BadAmount(EwsError):
    pass


class UnknownProject(EwsError):
    pass


class NonPositiveTotal(EwsError):
    pass


class MissingGold(EwsError):
    pass


class MissingRetrievalTrace(EwsError):
    pass


class InconsistentProjects(EwsError):
    pass


# --- issues (data, not failures) ----------------------------------------

@dataclass(frozen=True)
class Issue:
    """One machine-readable validation finding."""

    code: str
    message: str
    context: dict = field(default_factory=dict)

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"
