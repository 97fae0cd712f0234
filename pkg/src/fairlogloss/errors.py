"""Exception types raised by the library."""


class FairLogLossError(Exception):
    """Base class for all library errors."""


class DataError(FairLogLossError):
    """Input data could not be read or does not match its schema."""


class MissingColumn(DataError):
    def __init__(self, column, path=None):
        self.column = column
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"missing required column {column!r}{where}")


class BadValue(DataError):
    def __init__(self, row, column, value, reason=""):
        self.row = row
        self.column = column
        self.value = value
        msg = f"bad value {value!r} at row {row}, column {column!r}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class EmptyFile(DataError):
    pass


class SchemaError(DataError):
    pass


class ModelFileError(DataError):
    """Model file is unreadable or has an incompatible format version."""


class ZeroGroupRate(FairLogLossError):
    """A fairness group is empty on the sample, so the criterion is undefined."""

    def __init__(self, constraint_id, group):
        self.constraint_id = constraint_id
        self.group = group
        super().__init__(
            f"constraint {constraint_id!r}: group gamma_{group} has no examples"
        )


class NonFiniteObjective(FairLogLossError):
    pass


class DegenerateDenominator(FairLogLossError):
    """Label-marginalization denominator vanished; the conditionals carry no label signal."""


class MissingGroup(FairLogLossError):
    pass
