"""Exception hierarchy.

Every error raised by the library derives from :class:`CotError`.  Errors that
signal bad user input (invalid config values, missing files, broken
invariants on arguments) carry ``exit_code = 2`` so the CLI can tell them
apart from runtime failures.
"""


class CotError(Exception):
    exit_code = 1


class UsageError(CotError):
    exit_code = 2


class OutOfRange(UsageError):
    def __init__(self, field, detail=""):
        self.field = field
        msg = f"value out of range for field {field!r}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class BadRatios(UsageError):
    pass


class BadCount(UsageError):
    pass


class BadShape(UsageError):
    pass


class BadThresholds(UsageError):
    pass


class BadConfig(UsageError):
    pass


class ParseError(UsageError):
    def __init__(self, line, column, detail=""):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column!r}: {detail}")


class SchemaMismatch(UsageError):
    def __init__(self, expected, found):
        self.expected = expected
        self.found = found
        super().__init__(f"schema mismatch: expected {expected}, found {found}")


class DimensionMismatch(CotError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class StaleCache(DimensionMismatch):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class IoError(CotError, OSError):
    exit_code = 2


class VersionMismatch(UsageError):
    pass


class DegenerateGeometry(CotError):
    pass


class EmptyDataset(UsageError):
    pass


class EmptyValidation(UsageError):
    pass


class EmptyMask(UsageError):
    pass


class EmptyMatrix(CotError):
    pass


class LabelOutOfRange(CotError):
    pass


class SingularSystem(CotError):
    pass


class WindowTooLarge(UsageError):
    pass
