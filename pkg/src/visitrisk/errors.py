"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: configuration and validation
problems exit 2, data-integrity problems exit 3.
"""

from __future__ import annotations


class VisitRiskError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ConfigError(VisitRiskError):
    """Invalid configuration, parameters, or preconditions."""

    exit_code = 2


class DataIntegrityError(VisitRiskError):
    """Input data violates a structural invariant (named in the message)."""

    exit_code = 3


class ParseError(DataIntegrityError):
    """Malformed input file; the message names the offending line."""


class LeakageError(VisitRiskError):
    """A preprocessor fitted on one fold was applied to overlapping patients."""


class TrainingError(VisitRiskError):
    """Model fitting diverged or failed to converge."""


class MetricUndefinedError(VisitRiskError):
    """A metric was requested on inputs where it is undefined."""


class UnreachableFloorError(VisitRiskError):
    """No threshold achieves the requested sensitivity floor."""

    def __init__(self, floor, max_achievable):
        self.floor = float(floor)
        self.max_achievable = float(max_achievable)
        super().__init__(
            f"sensitivity floor {floor:g} is unreachable; "
            f"maximum achievable sensitivity is {max_achievable:.6f}"
        )
