"""Exception and warning types raised by the simulation engine."""


class HybridSDEError(Exception):
    """Base class for all library errors."""


class NonFiniteRate(HybridSDEError):
    pass


class NegativeRate(HybridSDEError):
    pass


class DivergentMass(HybridSDEError):
    """The Levy measure has infinite mass above the small-jump cutoff."""


class MajorantViolated(HybridSDEError):
    """A switching rate exceeded the thinning majorant supplied for it."""


class NonFiniteState(HybridSDEError):
    pass


class AllPathsTruncated(HybridSDEError):
    """Every path of an ensemble left the ball of radius ``R_max``."""


class QuadratureFailure(HybridSDEError):
    pass


class InversionBracketFailure(HybridSDEError):
    pass


class ThresholdViolated(UserWarning):
    """Resolvent series requested below the convergence threshold."""
