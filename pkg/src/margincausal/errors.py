"""Exception hierarchy shared by all modules."""


class MarginCausalError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(MarginCausalError):
    pass


class ParseError(MarginCausalError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class InsufficientDataError(MarginCausalError):
    pass


class DegenerateModelError(MarginCausalError):
    pass


class ConvergenceError(MarginCausalError):
    """Iterative solver stopped before reaching its tolerance.

    ``last_iterate`` holds whatever the solver had when it gave up and
    ``residual`` the gap / KKT violation at that point.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class EmptyMarginError(MarginCausalError):
    def __init__(self, step, message=None):
        super().__init__(message or f"empty margin set at step '{step}'")
        self.step = step
