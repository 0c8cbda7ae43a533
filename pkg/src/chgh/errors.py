"""Exception hierarchy.  The CLI maps ``UserError`` subclasses to exit code 1."""


class ChghError(Exception):
    pass


class UserError(ChghError):
    """Bad input or configuration supplied by the caller."""


class ConfigError(UserError):
    pass


class ParseError(UserError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where = f"{where}{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class RangeError(UserError):
    pass


class DimensionError(ChghError, ValueError):
    pass


class NumericError(ChghError, FloatingPointError):
    """Non-finite values surfaced during a forward pass or loss computation."""
