"""Exception hierarchy shared across the package."""


class FracScalarError(Exception):
    """Base class for every error raised by this package."""


class InvalidParams(FracScalarError, ValueError):
    pass


class DomainError(FracScalarError, ValueError):
    pass


class DimensionError(FracScalarError, ValueError):
    pass


class ZeroField(FracScalarError, ValueError):
    pass


class ResampleOverflow(FracScalarError):
    pass


class ResolutionError(FracScalarError):
    pass


class NotAdmissible(FracScalarError, ValueError):
    """The field left the admissible cone (integral of F is not positive)."""


class NotAdmissibleInit(NotAdmissible):
    pass


class EpsilonAboveThreshold(FracScalarError, ValueError):
    pass


class NoConvergence(FracScalarError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class WrongRegime(FracScalarError, ValueError):
    pass


class InsufficientTail(FracScalarError, ValueError):
    pass


class NotSolvable(FracScalarError, ValueError):
    pass


class DegenerateFit(FracScalarError, ValueError):
    pass


class FitSkipped(FracScalarError):
    pass


class ConfigError(FracScalarError, ValueError):
    pass
