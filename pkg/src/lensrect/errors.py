"""Exception types raised across the package."""


class LensRectError(Exception):
    """Base class for all errors raised by lensrect."""


class DirectionMismatchError(LensRectError, ValueError):
    """Parameters tagged for the wrong mapping direction."""


class NewtonDivergenceError(LensRectError, ArithmeticError):
    pass


class DegenerateDerivativeError(LensRectError, ArithmeticError):
    pass


class FitDegenerateError(LensRectError, ArithmeticError):
    pass


class DenominatorSignError(LensRectError, ArithmeticError):
    """Rational model denominator is not positive on the required radius range."""


class DegenerateInputError(LensRectError, ValueError):
    """Too few distinct points, or all collinear."""


class DimensionMismatchError(LensRectError, ValueError):
    pass


class EmptyRegionError(LensRectError, ValueError):
    """No pixels left to evaluate after masking and cropping."""


class CorruptMapError(LensRectError, ValueError):
    pass
