"""Exception types shared across the package."""

from __future__ import annotations


class AdlabError(Exception):
    """Base class for all package errors."""


class ScenarioError(AdlabError):
    """Invalid scenario data (bad invariants, amplitude too large, ...)."""


class SchemaError(ScenarioError):
    """Malformed scenario file: unknown keys or wrong types."""


class PositivityError(AdlabError):
    """A form that must be a metric fails pointwise positivity.

    Carries the offending minimum eigenvalue and the grid index where it
    is attained.
    """

    def __init__(self, message: str, min_eigenvalue: float, location: tuple):
        super().__init__(
            f"{message}: min eigenvalue {min_eigenvalue:.6e} at grid index {location}"
        )
        self.min_eigenvalue = min_eigenvalue
        self.location = location


class SolverError(AdlabError):
    """Newton solve failed (iteration cap or damping floor)."""

    def __init__(self, message: str, *, reason: str, iterations: int,
                 residual: float, min_eigenvalue: float | None = None):
        super().__init__(message)
        self.reason = reason
        self.iterations = iterations
        self.residual = residual
        self.min_eigenvalue = min_eigenvalue


class SweepError(AdlabError):
    """A continuation sweep aborted; completed reports are preserved."""

    def __init__(self, message: str, partial_reports: list, cause: Exception):
        super().__init__(message)
        self.partial_reports = partial_reports
        self.cause = cause


class FiberSolveError(AdlabError):
    """A fiberwise Ricci-flat solve failed; carries the fiber index."""

    def __init__(self, message: str, fiber_index: tuple, cause: Exception | None = None):
        super().__init__(f"{message} (fiber {fiber_index})")
        self.fiber_index = fiber_index
        self.cause = cause


class ConsistencyError(AdlabError):
    """An internal identity check failed beyond tolerance (flags a bug)."""
