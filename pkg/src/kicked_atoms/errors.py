"""Exception hierarchy.

``ParameterError`` is a usage problem (bad input); the others are numerical
failures raised while a computation is running.
"""


class KickedAtomsError(Exception):
    pass


class ParameterError(KickedAtomsError, ValueError):
    """Invalid parameter value; the message names the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericalError(KickedAtomsError, ArithmeticError):
    pass


class LadderOverflowError(NumericalError):
    """Significant amplitude reached the edge of the truncated momentum ladder."""


class QuadratureError(NumericalError):
    """Quadrature did not converge under node doubling."""


class EmptySignalError(NumericalError):
    """Detection cuts discarded every bin of a histogram."""
