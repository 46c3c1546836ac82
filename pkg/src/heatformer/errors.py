"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration problems exit 1, data and
format problems exit 2, numerical failures exit 3.
"""


class HeatformerError(Exception):
    exit_code = 1


class ConfigurationError(HeatformerError, ValueError):
    exit_code = 1


class DomainError(HeatformerError, ValueError):
    """Inputs have the wrong shape or lie outside an operation's domain."""

    exit_code = 2


class FormatError(HeatformerError):
    exit_code = 2


class StabilityError(HeatformerError):
    """Explicit time step exceeds the CFL bound."""

    exit_code = 3


class NumericalError(HeatformerError, ArithmeticError):
    exit_code = 3
