"""Exception hierarchy shared by the engine and its CLI exit-code contract."""


class EngineError(Exception):
    """Base class for errors raised by this package."""

    exit_code = 4


class ValidationError(EngineError):
    """Input violates a documented precondition or manifest invariant."""

    exit_code = 2


class InputError(EngineError):
    """File missing, unreadable, or malformed (I/O layer)."""

    exit_code = 3


class DegenerateScoresError(ValidationError):
    """Score set lacks one of the two classes required by a metric."""
