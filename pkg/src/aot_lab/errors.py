"""Exception types shared across the package."""


class AotLabError(Exception):
    """Base class for all errors raised by aot_lab."""


class InvalidArgumentError(AotLabError, ValueError):
    pass


class SingularMatrixError(AotLabError, ArithmeticError):
    """Raised when a GF(2) matrix has no inverse."""

    def __init__(self, rank, n):
        super().__init__(f"matrix is singular over GF(2): rank {rank} < {n}")
        self.rank = rank
        self.n = n


class GenerationFailure(AotLabError, RuntimeError):
    """A rejection sampler ran out of attempts."""

    def __init__(self, message, attempts):
        super().__init__(f"{message} (gave up after {attempts} attempts)")
        self.attempts = attempts


class ResourceLimitError(AotLabError, MemoryError):
    pass


class NotInSupportError(AotLabError, KeyError):
    pass


class InfiniteLossError(AotLabError, ArithmeticError):
    """A model assigned zero probability to an outcome the language supports."""


class NumericFaultError(AotLabError, FloatingPointError):
    pass


class UnknownSymbolError(AotLabError, KeyError):
    pass


class ConsistencyError(AotLabError, RuntimeError):
    """Two runs that must see identical streams did not."""
