"""Exception hierarchy and the CLI exit code each class maps to."""


class BeltforgeError(Exception):
    """Base class; carries the process exit code used by the CLI."""

    exit_code = 1


class DomainError(BeltforgeError):
    """Invalid value for an operation (bad lengths, out-of-range inputs)."""

    exit_code = 2


class ConfigError(BeltforgeError):
    """Malformed or inconsistent configuration."""

    exit_code = 3


class InsufficientDataError(DomainError):
    """Too few (or degenerate) samples for a fit."""

    exit_code = 4


class FitNonConvergenceError(BeltforgeError):
    """Parameter fit ran out of iterations; carries the best result so far."""

    exit_code = 5

    def __init__(self, message, best_params=None, report=None):
        super().__init__(message)
        self.best_params = best_params
        self.report = report


class InfeasiblePlanError(BeltforgeError):
    """Planner exhausted penalty escalations; carries best path + report."""

    exit_code = 6

    def __init__(self, message, path=None, report=None):
        super().__init__(message)
        self.path = path
        self.report = report


class TrainingDivergedError(BeltforgeError):
    """Training loss blew up; carries the loss trace."""

    exit_code = 7

    def __init__(self, message, loss_trace=None):
        super().__init__(message)
        self.loss_trace = loss_trace


class RolloutError(BeltforgeError):
    """Policy produced a non-finite output during rollout."""

    exit_code = 8

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StageDependencyError(BeltforgeError):
    """A pipeline stage is missing an upstream artifact."""

    exit_code = 9


class FormatError(BeltforgeError):
    """Artifact schema-version mismatch or malformed artifact JSON."""

    exit_code = 10
