"""Exception types raised by the engine."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class ArbitrageError(ValidationError):
    """No strictly positive one-step risk-neutral kernel exists."""


class HedgeError(ValidationError):
    """Hedge system is singular beyond tolerance.

    Attributes
    ----------
    rank : int
        Numerical rank of the system matrix.
    singular_values : numpy.ndarray
        Singular values of the (row-scaled) system matrix.
    """

    def __init__(self, message, rank=None, singular_values=None):
        super().__init__(message)
        self.rank = rank
        self.singular_values = singular_values
