"""Exception hierarchy for the package.

Every error the library raises derives from :class:`ActsegError` so the CLI
can map failure classes onto distinct exit codes (see ``cli.EXIT_CODES``).
"""

from __future__ import annotations


class ActsegError(Exception):
    """Base class for all errors raised by this package."""


class IoFailure(ActsegError):
    """A file could not be read or written."""


class MalformedLineError(ActsegError):
    """An event-log line does not match the expected grammar."""

    def __init__(self, message: str, line_no: int = 0):
        super().__init__(f"line {line_no}: {message}" if line_no else message)
        self.line_no = line_no


class EmptyDatasetError(ActsegError):
    """An operation that needs events received none."""


class EmptyTrainingSetError(ActsegError):
    """No usable training segments for a required component."""


class EmptyValidationSetError(ActsegError):
    """Threshold calibration needs a labeled validation split."""


class EmptyEvaluationError(ActsegError):
    """A metric was requested over zero scored events."""


class NoTrueStartsError(ActsegError):
    """Begin-detection accuracy needs at least one ground-truth start."""


class ZeroLikelihoodError(ActsegError):
    """Every hidden state assigned probability zero to an observation."""


class SchemaVersionError(ActsegError):
    """A model file is missing, truncated, or has an unsupported version."""


class InvariantViolation(ActsegError):
    """A probability table or model structure fails its invariants."""


class InvalidGeneratorSpec(ActsegError):
    """A synthetic-stream profile is incomplete or inconsistent."""
