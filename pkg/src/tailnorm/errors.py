"""Exception hierarchy shared by all modules."""


class TailNormError(Exception):
    """Base class for library errors."""


class InputError(TailNormError, ValueError):
    """Arguments outside the admissible range, malformed grids or descriptors."""


class ConstructionError(TailNormError):
    """A tail or generating function could not be built with the required invariants."""


class DivergenceError(TailNormError):
    """An integral or supremum diverges.

    ``critical`` holds the critical exponent or argument when it is known.
    """

    def __init__(self, message, critical=None):
        super().__init__(message)
        self.critical = critical


class QuadratureError(TailNormError):
    """Quadrature did not converge; ``partial`` carries the value accumulated so far."""

    def __init__(self, message, partial=float("nan"), error=float("inf")):
        super().__init__(message)
        self.partial = partial
        self.error = error


class NonConvexError(TailNormError):
    """Bracketing detected that a function expected to be convex is not."""


class NotApplicableError(TailNormError):
    """The requested quantity is not defined for this input (e.g. finite support endpoint)."""
