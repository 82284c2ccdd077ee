"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` used by the command-line front end.
"""

from __future__ import annotations

from typing import Any


class IbmError(Exception):
    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.details = details


class ConfigurationError(IbmError, ValueError):
    """Bad discretization parameters, unknown keys, inconsistent inputs."""

    exit_code = 2


class ValidationError(IbmError, ValueError):
    """Input data violate a structural requirement (support, grid binding)."""

    exit_code = 2


class GridMismatchError(ValidationError):
    pass


class DomainError(IbmError, ValueError):
    """Argument outside the domain of definition of an evaluator."""

    exit_code = 2


class SingularPointError(DomainError):
    pass


class WellPosednessError(IbmError):
    """E is (numerically) an impedance eigenvalue, or a solve is near-singular."""

    exit_code = 3

    def __init__(self, message: str, probe: Any = None, **details: Any):
        super().__init__(message, **details)
        self.probe = probe


class ExceptionalPointError(WellPosednessError):
    """Fredholm solve at a (numerically) exceptional momentum."""


class AccuracyError(IbmError):
    """A quadrature or extrapolation did not reach its target tolerance."""

    exit_code = 4

    def __init__(self, message: str, achieved: float | None = None, **details: Any):
        super().__init__(message, **details)
        self.achieved = achieved


class ContainerError(IbmError, OSError):
    exit_code = 5


class MagicError(ContainerError):
    pass


class TruncationError(ContainerError):
    pass


class ShapeError(ContainerError):
    pass
