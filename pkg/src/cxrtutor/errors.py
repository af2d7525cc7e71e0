"""Exception types shared across the engine.

Every error the engine raises deliberately derives from CxrTutorError so
callers (CLI, HTTP layer) can distinguish engine failures from bugs.
"""

from __future__ import annotations


class CxrTutorError(Exception):
    """Base class for all engine errors."""


class InvariantViolation(CxrTutorError):
    """A domain invariant failed; the message names the invariant."""


class MissingFile(CxrTutorError):
    pass


class MalformedSidecar(CxrTutorError):
    """case.json is unreadable or a field has the wrong shape."""


class ZeroAreaBox(CxrTutorError):
    pass


class ZeroDistance(CxrTutorError):
    """Directional guidance requested between coincident points."""


class OutOfBoundsFixation(CxrTutorError):
    pass


class SkillMismatch(CxrTutorError):
    pass


class BackendTimeout(CxrTutorError):
    pass


class BackendHttpError(CxrTutorError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(message or f"backend returned HTTP {status}")
        self.status = status


class BackendMisconfigured(CxrTutorError):
    pass


class ImageTooLarge(CxrTutorError):
    pass


class ParseFailure(CxrTutorError):
    """Backend reply unusable even after one re-prompt."""


class UpstreamHttpError(CxrTutorError):
    pass


class FallbackUnavailable(CxrTutorError):
    pass


class UnknownSkill(CxrTutorError):
    pass


class DuplicateCaseId(CxrTutorError):
    pass


class UnknownCase(CxrTutorError):
    pass


class UnknownLabel(CxrTutorError):
    pass


class ImageWriteError(CxrTutorError):
    pass


class SessionCompleted(CxrTutorError):
    pass


class TurnIndexMismatch(CxrTutorError):
    pass


class CorruptLog(CxrTutorError):
    def __init__(self, line_number: int, message: str = ""):
        super().__init__(message or f"corrupt event log at line {line_number}")
        self.line_number = line_number
