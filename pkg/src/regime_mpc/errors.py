"""
Exception hierarchy for the regime MPC toolkit.

Input problems (bad files, bad configuration, too little history) map to exit
code 1; numerical failures (infeasible plans, bankruptcy, failed tuning) map
to exit code 2.
"""

import yaml
from pydantic import ValidationError


class PortfolioError(Exception):
    """Base class for all errors raised by the package."""


class InputError(PortfolioError, ValueError):
    """The inputs to a pipeline step are unusable."""


class DataValidationError(InputError):
    """A data file violates its schema or a domain invariant."""


class AlignmentError(InputError):
    """Price series cannot be aligned onto a common calendar."""


class ConfigError(InputError):
    """A configuration value is missing, inconsistent or points nowhere."""


class WarmupError(InputError):
    """Not enough history before a decision date."""


class GuardError(InputError):
    """An instance is too large for an exhaustive computation."""


class NumericalError(PortfolioError):
    """A numerical step failed."""


class InfeasibleError(NumericalError):
    """The allocation problem has no feasible point."""


class IlliquidityError(NumericalError):
    """A trade was requested in an asset without traded volume."""


class BankruptcyError(NumericalError):
    """Portfolio value fell to zero or below."""


class TuningError(NumericalError):
    """Every hyperparameter trial failed."""


EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


def exit_code(exc: BaseException) -> int:
    """Map an exception to the command-line exit status."""
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, (InputError, OSError, ValidationError, yaml.YAMLError)):
        return EXIT_INPUT
    return EXIT_NUMERICAL
