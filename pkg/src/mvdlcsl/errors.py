"""Exception hierarchy."""


class MVDLCSLError(Exception):
    """Base class for all package errors."""


class ValidationError(MVDLCSLError, ValueError):
    """An input violates a documented invariant."""


class DimensionMismatchError(ValidationError):
    pass


class DataFormatError(MVDLCSLError, ValueError):
    """A file could not be parsed.  Carries the path and line when known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class FormatVersionError(DataFormatError):
    pass


class NumericalError(MVDLCSLError, ArithmeticError):
    pass


class ClassTooSmallError(ValidationError):
    def __init__(self, label, count, k):
        super().__init__(f"class {label} has {count} labeled instances, need at least {k}")
        self.label = label
