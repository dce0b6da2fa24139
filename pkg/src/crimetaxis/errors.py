"""Exception hierarchy shared by the simulator, the diagnostics and the CLI."""
from __future__ import annotations


class CrimeTaxisError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CrimeTaxisError, ValueError):
    """An argument lies outside the domain of a pointwise formula."""


class SingularityError(CrimeTaxisError, ValueError):
    """The attractiveness field reached a nonpositive value inside the taxis term."""


class ConfigError(CrimeTaxisError, ValueError):
    """Invalid configuration text or parameter combination."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line


class UsageError(CrimeTaxisError, ValueError):
    """A diagnostic or harness routine was called with inconsistent inputs."""


class StepFailure(CrimeTaxisError, RuntimeError):
    """A time step could not be completed.

    ``state`` is the last good state and ``info`` holds whatever diagnostics
    were available when the failure happened.
    """

    def __init__(self, message: str, state=None, info: dict | None = None):
        super().__init__(message)
        self.state = state
        self.info = dict(info or {})


class DegeneracyError(StepFailure):
    """The attractiveness fell to or below the configured positivity guard."""


class NumericalFailure(StepFailure):
    """A non-finite value appeared in the solution."""
