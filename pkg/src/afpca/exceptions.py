"""Exception hierarchy shared by all modules.

Each error carries a ``category`` used by the command-line front end to pick
an exit code: ``"usage"`` (1), ``"data"`` (2) or ``"numerical"`` (3).
"""


class AfpcaError(Exception):
    category = "numerical"


class DataError(AfpcaError, ValueError):
    category = "data"


class InvalidDimensionError(DataError):
    pass


class InvalidDomainError(DataError):
    pass


class OutOfDomainError(DataError):
    pass


class DataValidationError(DataError):
    pass


class SchemaError(DataError):
    pass


class CsvParseError(DataError):
    pass


class DuplicateAbscissaError(DataError):
    pass


class NumericalError(AfpcaError, ArithmeticError):
    category = "numerical"


class RankDeficiencyError(NumericalError):
    pass


class NumericalFailureError(NumericalError):
    pass
