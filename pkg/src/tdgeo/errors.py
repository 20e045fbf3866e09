"""Exception hierarchy shared by all tdgeo modules."""


class TDGeoError(Exception):
    """Base class for every error raised by tdgeo."""


class InvalidMRP(TDGeoError):
    """The transition matrix does not define an irreducible, aperiodic chain."""


class NotStochastic(InvalidMRP):
    pass


class Reducible(InvalidMRP):
    pass


class Periodic(InvalidMRP):
    pass


class InvalidProbability(InvalidMRP):
    pass


class ShapeMismatch(TDGeoError, ValueError):
    pass


class SingularSolve(TDGeoError):
    pass


class SolveFailure(TDGeoError):
    pass


class PositivityViolation(TDGeoError):
    pass


class RankDeficient(TDGeoError, ValueError):
    pass


class NoComplexEigenvalue(TDGeoError):
    """A has a purely real spectrum, so the divergent construction does not apply."""

    def __init__(self, message, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues


class DivergedBeyondRange(TDGeoError, OverflowError):
    pass


class StepFailure(TDGeoError):
    pass


class NonFiniteState(TDGeoError):
    pass


class TooFewSamples(TDGeoError, ValueError):
    pass


class NotHomogeneous(TDGeoError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConstantEstimationFailed(TDGeoError):
    pass


class ParseError(TDGeoError, ValueError):
    pass
