"""Exception types shared across the package.

Every error raised on a user-facing path derives from DarcyError so callers
can catch one base class. The CLI maps subclasses to distinct exit codes.
"""
from __future__ import annotations


class DarcyError(Exception):
    """Base class for all package errors."""


class MeshFormatError(DarcyError):
    """Malformed mesh file. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidMeshError(DarcyError):
    """Mesh data that parses but violates a structural requirement."""


class ConfigurationError(DarcyError):
    """Inconsistent or unsupported run configuration."""


class SingularSystemError(DarcyError):
    """The assembled system is singular.

    The standard cause is a connected component whose boundary carries no
    natural (prescribed pressure) condition, leaving its constant pressure
    mode unconstrained.
    """


class ConstraintDeficiencyError(DarcyError):
    """A substructure's coarse constraints cannot fix its local kernel."""


class IndefiniteOperatorError(DarcyError):
    """An operator required to be positive definite produced a nonpositive
    quadratic form during iteration."""


class NonConvergenceError(DarcyError):
    """Iteration budget exhausted before reaching the requested tolerance."""
