"""Exception hierarchy shared by all modules."""


class CavqiError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CavqiError, ValueError):
    """An argument lies outside the domain of the function."""


class DegenerateDenominator(DomainError):
    pass


class NonReproducingCavity(CavqiError):
    """The element sequence does not map the mode array back onto itself."""


class ParaxialViolation(CavqiError):
    """A ray angle left the paraxial regime during tracing."""


class NoStokesCounts(CavqiError):
    pass


class ZeroDenominator(CavqiError):
    pass


class DegenerateData(CavqiError, ValueError):
    pass


class NonConvergence(CavqiError):
    """Optimizer hit its iteration cap; ``result`` holds the best iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class BoundaryOptimum(DomainError):
    """Optimum pinned to a bound of the search interval; ``result`` holds it."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ParseError(CavqiError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(CavqiError, ValueError):
    """Configuration or parameter validation failed.

    ``problems`` lists every violated constraint, not only the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ProbabilityOverflow(ValidationError, DomainError):
    """A quantity that must be a probability exceeded 1."""


class IoError(CavqiError, OSError):
    """Reading or writing a file failed; the message names the path."""

    def __init__(self, message: str, path=None):
        self.path = path
        super().__init__(message if path is None else f"{message}: {path}")
