"""Exception hierarchy for the workbench."""

from __future__ import annotations


class DPMError(Exception):
    """Base class for all workbench errors."""


class LogFormatError(DPMError):
    def __init__(self, message: str, lineno: int | None = None):
        super().__init__(message)
        self.lineno = lineno


class IntegrityError(DPMError):
    """A stored digest does not match recomputed content."""


class SealedLogError(DPMError):
    pass


class ProtocolError(DPMError):
    """Backend received a prompt it cannot parse. Signals a harness bug."""


class ConfigurationError(DPMError):
    pass


class RemoteRetriableError(DPMError):
    def __init__(self, message: str, retry_after: float | None = None, attempts: int = 0):
        super().__init__(message)
        self.retry_after = retry_after
        self.attempts = attempts


class ContextWindowError(DPMError):
    pass


class ViewFormatError(DPMError):
    """A rendered memory view is missing or misorders a section."""


class ProjectionFormatError(DPMError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class DecisionFormatError(DPMError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class StepError(DPMError):
    """A consolidation step failed; ``step`` is the 1-based index."""

    def __init__(self, step: int, cause: BaseException):
        super().__init__(f"consolidation step {step} failed: {cause}")
        self.step = step
        self.cause = cause


class LedgerClosedError(DPMError):
    pass


class UnknownRunError(DPMError, KeyError):
    pass


class UndefinedScoreError(DPMError, ValueError):
    pass
