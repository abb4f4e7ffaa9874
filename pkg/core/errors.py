# File: core/errors.py

"""Exception hierarchy shared by every subsystem.

The command-line front end maps these onto process exit codes, so numeric
failures and bad input stay distinguishable in batch runs.
"""

from __future__ import annotations

from typing import Optional


class LabError(Exception):
    """Base class for all errors raised by the laboratory."""

    exit_code = 3


class InvalidParameterError(LabError, ValueError):
    """A caller supplied a value outside an operation's domain."""

    exit_code = 2


class ConfigError(LabError):
    """Experiment configuration is malformed or references missing files."""

    exit_code = 2


class InvalidComparisonError(LabError):
    """Two result files cannot be compared."""

    exit_code = 2


class DegenerateMetricError(LabError):
    """A triangle has zero area or violates the triangle inequality."""


class ConstraintViolationError(LabError):
    """Geometric construction constraints do not hold (e.g. ribbon too wide)."""


class EmbeddingFailureError(LabError):
    """Generated surface intersects itself."""


class InvalidImmersionError(LabError):
    """An immersion does not satisfy the preconditions of a report."""


class PointAtInfinityError(LabError):
    """The north pole has no image in the stereographic chart."""


class ConvergenceError(LabError):
    """An iterative method stopped before meeting its residual contract."""

    def __init__(self, message: str, residual: float, iterations: Optional[int] = None) -> None:
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class RefinementNeededError(LabError):
    """The mesh is too coarse to resolve a requested deformation."""

    def __init__(self, message: str, required_edge_length: float) -> None:
        super().__init__(f"{message}; refine to edge length <= {required_edge_length:.3e}")
        self.required_edge_length = required_edge_length


class InvariantViolationError(LabError):
    """A verified inequality or invariant failed during a run."""

    exit_code = 4
