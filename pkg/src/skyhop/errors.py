"""Exception hierarchy shared across the toolkit.

Every error carries an ``exit_code`` so the command line tool can map
failures onto stable process exit codes:

* 2 -- the instance is infeasible (no plan exists under the given limits)
* 3 -- a solver hit its wall-clock budget
* 4 -- bad input (malformed feed, invalid config, inconsistent data)
"""

from __future__ import annotations


class SkyhopError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InputError(SkyhopError):
    """Malformed or inconsistent input data."""

    exit_code = 4


class GtfsError(InputError):
    """Problem ingesting a GTFS feed (missing file, bad row, ...)."""


class ConfigError(InputError):
    """Invalid run configuration."""


class ValidationError(InputError):
    """A data structure handed to a solver violates its contract."""


class InfeasibleError(SkyhopError):
    """No feasible plan exists for the given instance."""

    exit_code = 2


class AllocationInfeasibleError(InfeasibleError):
    """The allocation graph admits no valid set of tours."""


class NoPathError(InfeasibleError):
    """A single constrained shortest-path query has no solution."""


class TaskInfeasibleError(InfeasibleError):
    """A delivery task cannot be completed within the energy budget.

    ``leg`` identifies which half of the task failed (1 = depot to
    package, 2 = package to return depot).
    """

    def __init__(self, message: str, leg: int | None = None):
        super().__init__(message)
        self.leg = leg


class SolverInfeasibleError(InfeasibleError):
    """The multi-agent solver proved the joint instance infeasible.

    ``agent`` names the offending agent when a single agent is to blame.
    """

    def __init__(self, message: str, agent: int | None = None):
        super().__init__(message)
        self.agent = agent


class SolveTimeoutError(SkyhopError):
    """A solver exceeded its wall-clock budget.

    ``diagnostics`` carries partial progress (nodes expanded, open list
    size, ...) so callers can report what was achieved before the cutoff.
    """

    exit_code = 3

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
