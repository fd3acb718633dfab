"""Exception types shared by all modules.

Each class carries an ``exit_code`` used by the command line front end.
"""


class WaveKineticError(Exception):
    exit_code = 1


class DomainError(WaveKineticError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    exit_code = 3


class PreconditionError(WaveKineticError, ValueError):
    """Input data violate a numerical precondition (grid too small, step too large)."""

    exit_code = 3


class NumericError(WaveKineticError, RuntimeError):
    """A computation failed to reach its accuracy target."""

    exit_code = 4


class StabilityError(NumericError):
    """A time integrator produced clipping beyond tolerance."""

    exit_code = 4


class ConfigError(WaveKineticError, ValueError):
    """A configuration file is malformed or contains unknown keys."""

    exit_code = 2
