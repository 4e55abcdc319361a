"""Exception hierarchy shared across the toolkit.

Every error derives from :class:`QCopulaError`; the CLI maps the three
middle-tier classes onto exit codes.
"""


class QCopulaError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(QCopulaError):
    """Invalid run configuration or precondition on structural inputs."""


class DataError(QCopulaError):
    """Malformed or insufficient input data."""


class NumericError(QCopulaError):
    """A numeric routine failed to produce a finite result."""


# data
class MissingColumn(DataError):
    pass


class UnparseableRow(DataError):
    def __init__(self, line: int, detail: str = "", path=None):
        self.line = line
        where = f"{path}:" if path else "line "
        super().__init__(f"{where}{line}: unparseable row {detail}".rstrip())


class NonPositivePrice(DataError):
    def __init__(self, line: int, value: float, path=None):
        self.line = line
        where = f"{path}:" if path else "line "
        super().__init__(f"{where}{line}: non-positive close {value!r}")


class NoCommonDates(DataError):
    pass


class DegenerateColumn(DataError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column!r} has zero variance")


class TooFewObservations(DataError):
    pass


class EmptyPartition(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class OutOfDomain(DataError):
    pass


class OutOfRange(DataError):
    pass


class TooFewTailPoints(DataError):
    pass


class NoExceedances(DataError):
    pass


class MissingModel(DataError):
    pass


# numeric
class FitDiverged(NumericError):
    pass


class NotPositiveDefinite(NumericError):
    pass


class NonFiniteDensity(NumericError):
    pass


class NonFiniteObjective(NumericError):
    pass


class ZeroVar(NumericError):
    pass


# config / structure
class TooManyQubits(ConfigError):
    pass


class IndexOutOfRange(ConfigError):
    pass


class ParamLengthMismatch(ConfigError):
    pass


class SizeMismatch(ConfigError):
    pass


class NonPositiveEps(ConfigError):
    pass


class EtaOutOfRange(ConfigError):
    pass
