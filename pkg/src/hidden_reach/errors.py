"""Exception hierarchy shared by every module.

Each class carries the CLI exit code that ``hidden-reach`` returns when the
exception escapes a command.
"""

from __future__ import annotations


class HiddenReachError(Exception):
    exit_code = 4


class DimensionError(HiddenReachError, ValueError):
    exit_code = 2


class ValidationError(HiddenReachError, ValueError):
    exit_code = 2


class ConfigError(HiddenReachError, ValueError):
    """Bad scenario configuration; ``path`` points at the offending key."""

    exit_code = 2

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InstabilityError(HiddenReachError, ValueError):
    exit_code = 2


class UnboundedSetError(InstabilityError):
    """Open-loop unstable plant: hidden reachable sets are unbounded."""


class DegeneracyError(HiddenReachError, ValueError):
    exit_code = 4


class NumericalError(HiddenReachError, RuntimeError):
    exit_code = 4


class LayoutError(HiddenReachError, ValueError):
    exit_code = 4


class InfeasibleError(HiddenReachError):
    """No feasible point; ``report`` holds per-attempt diagnostics."""

    exit_code = 3

    def __init__(self, message: str, report=None):
        self.report = report if report is not None else []
        super().__init__(message)


class UnboundedError(HiddenReachError):
    exit_code = 4


class ContainmentViolation(HiddenReachError):
    exit_code = 5

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)
