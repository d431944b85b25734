"""Exception types shared across the package."""


class CovGeomError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(CovGeomError, ValueError):
    pass


class OutOfSupport(CovGeomError, ValueError):
    pass


class NonFiniteIntegrand(CovGeomError, ArithmeticError):
    pass


class UnsupportedModel(CovGeomError, TypeError):
    pass


class EmptySamples(CovGeomError, ValueError):
    pass


class BaseMismatch(CovGeomError, ValueError):
    pass


class SupportMismatch(CovGeomError, ValueError):
    """KL divergence is infinite: q vanishes where p carries mass."""


class ZeroTangent(CovGeomError, ValueError):
    pass


class ZeroVariance(CovGeomError, ZeroDivisionError):
    pass


class ShapeMismatch(CovGeomError, ValueError):
    pass


class SingularMetric(CovGeomError, ArithmeticError):
    """The covariate information matrix is not invertible.

    ``null_space`` holds orthonormal columns spanning the near-null
    eigenspace, i.e. coefficient vectors ``c`` with ``c @ s(x) ~ 0``.
    """

    def __init__(self, message, null_space=None):
        super().__init__(message)
        self.null_space = null_space


class InputError(CovGeomError, ValueError):
    """Malformed user input (CSV rows, model JSON, tangent expressions)."""
