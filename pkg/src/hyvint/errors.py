"""Exception hierarchy shared by the library and the command line."""


class HyvintError(Exception):
    """Base class for all package errors."""


class DataError(HyvintError):
    """Malformed input data, missing files, or inconsistent dimensions."""


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class DomainError(HyvintError, ValueError):
    """Argument outside the domain of a numerical function."""


class NumericalError(HyvintError):
    """A computation produced non-finite values.

    ``state`` holds the last finite iterate (when there is one) and
    ``iteration`` the step at which the failure was detected.
    """

    def __init__(self, message, state=None, iteration=None):
        super().__init__(message)
        self.state = state
        self.iteration = iteration


class StageError(HyvintError):
    """Wraps a failure inside one pipeline stage and records which stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
