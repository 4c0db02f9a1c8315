"""
Exception hierarchy for the spillfree toolkit.

Library code raises these; only the command-line layer converts them into
process exit codes.
"""

from typing import Optional

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class SpillfreeError(Exception):
    """Base class for all toolkit errors."""

    exit_code: int = EXIT_NUMERICAL


class InvalidStateError(SpillfreeError, ValueError):
    """A state, input or parameter set is non-finite or out of its domain."""

    exit_code = EXIT_NUMERICAL


class SingularityError(SpillfreeError):
    """A parametrization or kinematic singularity was hit."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, node: Optional[int] = None):
        if node is not None:
            message = f"{message} (node {node})"
        super().__init__(message)
        self.node = node


class ConfigError(SpillfreeError, ValueError):
    """Invalid or inconsistent configuration."""

    exit_code = EXIT_IO


class TrajectoryFileError(SpillfreeError):
    """A CSV/JSON input file could not be parsed."""

    exit_code = EXIT_IO

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InfeasibleProblemError(SpillfreeError):
    """The quadratic program has no feasible point."""

    exit_code = EXIT_INFEASIBLE


class NumericalError(SpillfreeError):
    """A numerical routine failed to produce a usable result."""

    exit_code = EXIT_NUMERICAL


class DynamicsUnavailableError(SpillfreeError):
    """Inverse dynamics requested on a model without inertial parameters."""

    exit_code = EXIT_NUMERICAL


class IKDivergenceError(SpillfreeError):
    """Differential inverse kinematics lost track of the commanded pose."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, node: Optional[int] = None):
        if node is not None:
            message = f"{message} (node {node})"
        super().__init__(message)
        self.node = node


class JointLimitError(SpillfreeError):
    """A joint trajectory violates the arm's limits (strict mode)."""

    exit_code = EXIT_NUMERICAL
