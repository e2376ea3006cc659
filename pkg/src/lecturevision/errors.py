"""Exception hierarchy shared across the package.

Every error raised on purpose derives from LectureVisionError so callers can
catch tool failures without swallowing genuine bugs (TypeError, KeyError, ...).
"""
from __future__ import annotations


class LectureVisionError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LectureVisionError):
    """Invalid user-supplied configuration (ratios, thresholds, commands...)."""


class ParseError(LectureVisionError):
    """Malformed annotation, manifest, or config content."""


class RangeError(ParseError):
    """Numeric field outside its documented range (beyond tolerance)."""


class DegenerateBoxError(ParseError):
    """Annotation collapses to a non-positive-area box after clamping."""


class LoadError(LectureVisionError):
    """Referenced file missing or unreadable (images, manifests, models)."""


class IntegrityError(LectureVisionError):
    """Internal consistency violated: duplicate ids, leaked validation frames."""


class EvaluationError(LectureVisionError):
    """Predictions cannot be scored against the given dataset."""


class BackendError(LectureVisionError):
    """Backend process failed: nonzero exit, timeout, or crash.

    Carries captured output so the caller can surface diagnostics.
    """

    def __init__(self, message: str, *, stdout: str = "", stderr: str = ""):
        super().__init__(message)
        self.stdout = stdout
        self.stderr = stderr


class ProtocolError(LectureVisionError):
    """Backend exited cleanly but violated the file contract."""


class OracleRefusal(LectureVisionError):
    """Reference evaluator asked to score an instance above its size bounds."""
