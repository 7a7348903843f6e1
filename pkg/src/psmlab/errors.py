"""Exception hierarchy shared by every stage of the pipeline."""


class PSMLabError(Exception):
    """Base class for all errors raised by psmlab."""


class SingularMatrix(PSMLabError, ArithmeticError):
    pass


class InsufficientRows(PSMLabError, ValueError):
    pass


class ZeroVector(PSMLabError, ValueError):
    pass


class RejectionLimitExceeded(PSMLabError, RuntimeError):
    pass


class DegenerateTreatment(PSMLabError, ValueError):
    pass


class NotConverged(PSMLabError, RuntimeError):
    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class SeparationDetected(PSMLabError, RuntimeError):
    """Raised when the treatment indicator is (quasi-)perfectly predictable.

    The last IRLS iterate is attached as ``fit`` so callers can still read
    the diverging scores.
    """

    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class OneClassOnly(PSMLabError, ValueError):
    pass


class NoPairsFormed(PSMLabError, RuntimeError):
    pass


class RankDeficient(PSMLabError, ArithmeticError):
    pass


class TooFewPairs(PSMLabError, ValueError):
    pass


class ConfigInvalid(PSMLabError, ValueError):
    pass


class ParseError(PSMLabError, ValueError):
    pass
