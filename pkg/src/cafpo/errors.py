"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to.
"""


class CafpoError(Exception):
    exit_code = 1


class ConfigError(CafpoError, ValueError):
    exit_code = 2


class DataError(CafpoError, ValueError):
    exit_code = 3


class NumericalError(CafpoError, ArithmeticError):
    exit_code = 4


class ShapeError(NumericalError, ValueError):
    """Raised when an operation receives incompatible tensor shapes."""


class AuditError(CafpoError):
    exit_code = 5
