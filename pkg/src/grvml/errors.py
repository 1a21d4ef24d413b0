"""Exception hierarchy shared by every grvml module."""


class GrvmlError(Exception):
    """Base class for all errors raised by grvml."""


class MalformedFile(GrvmlError, ValueError):
    pass


class DimensionMismatch(GrvmlError, ValueError):
    pass


class NonFiniteEntry(GrvmlError, ValueError):
    pass


class InvalidVariance(GrvmlError, ValueError):
    pass


class IoFailure(GrvmlError, OSError):
    pass


class SvdFailure(GrvmlError, ArithmeticError):
    pass


class ZeroSigmaE(GrvmlError, ValueError):
    pass


class PoleViolation(GrvmlError, ValueError):
    pass


class BracketFailure(GrvmlError, ArithmeticError):
    pass


class MaxIterExceeded(GrvmlError, ArithmeticError):
    pass


class TlsNongeneric(GrvmlError, ArithmeticError):
    pass


class RankDeficient(GrvmlError, ArithmeticError):
    pass


class DegenerateCase(GrvmlError, ValueError):
    pass


class DimensionTooLarge(GrvmlError, ValueError):
    pass


class DomainViolation(GrvmlError, ValueError):
    pass


class GenerationTimeout(GrvmlError, RuntimeError):
    pass


# errors that mean "the numerics failed", as opposed to bad input
NUMERIC_ERRORS = (SvdFailure, BracketFailure, MaxIterExceeded, PoleViolation,
                  TlsNongeneric, RankDeficient, ZeroSigmaE)
