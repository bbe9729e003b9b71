"""Exception hierarchy shared by every processing stage."""


class XRPDError(Exception):
    """Base class for all package errors."""


class ParseError(XRPDError, ValueError):
    """A pattern file line could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GridError(XRPDError, ValueError):
    """Angle grid is not uniform, or two grids do not match."""


class SizeError(XRPDError, ValueError):
    """An array has an unusable length."""


class DomainError(XRPDError, ValueError):
    """A parameter or value lies outside its admissible range."""


class NumericalError(XRPDError, ArithmeticError):
    """A linear-algebra step is singular or ill-posed."""

    def __init__(self, message, condition=None):
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3g})"
        super().__init__(message)
        self.condition = condition


class StageError(XRPDError, RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
