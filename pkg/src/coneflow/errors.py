"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration and precondition
problems exit 2, numerical inconclusiveness exits 3, and a completed
run whose verification fails exits 1.
"""


class ConeflowError(Exception):
    """Base class for all package errors."""


class InputError(ConeflowError):
    """Invalid configuration, malformed scenario, or violated precondition."""


class DomainError(InputError):
    """Parameter outside the admissible range (e.g. resolvent step too large)."""


class NumericalError(ConeflowError):
    """A linear solve or iteration failed; carries diagnostic context."""

    def __init__(self, message, condition=None, iterate=None):
        super().__init__(message)
        self.condition = condition
        self.iterate = iterate


class TangencyViolationError(ConeflowError):
    """No admissible velocity exists at a queried point.

    Carries the offending (t, x) pair and, when raised mid-integration,
    the partial trajectory computed so far.
    """

    def __init__(self, t, x, message=None):
        self.t = t
        self.x = x
        self.partial_trajectory = None
        if message is None:
            message = f"no tangent velocity available at t={t!r}, x={x!r}"
        super().__init__(message)


class BoundaryZeroError(ConeflowError):
    """The field vanishes on the region boundary; the degree is undefined there."""


class InconclusiveError(ConeflowError):
    """Refinement or sweep ended before the computed integer stabilized."""

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table
