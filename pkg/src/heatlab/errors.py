"""Exception types shared across heatlab."""


class HeatlabError(Exception):
    pass


class InvalidArgument(HeatlabError, ValueError):
    pass


class PointOutsideDomain(HeatlabError, ValueError):
    pass


class ProblemTooLarge(HeatlabError):
    """Raised when a dense eigensolve would exceed the configured dof cap."""


class InvalidInput(HeatlabError, ValueError):
    pass


class DecompositionUnavailable(HeatlabError):
    """The mesh is too coarse for a dyadic decomposition (h >= 1/(4 C_star))."""


class IncompleteReport(HeatlabError):
    pass


class ParseError(HeatlabError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(HeatlabError, ValueError):
    pass
