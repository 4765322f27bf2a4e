"""Exception and warning classes shared across the package."""


class BlockCovError(Exception):
    """Base class for numerical failures raised by blockcov."""


class NotPositiveDefiniteError(BlockCovError, ValueError):
    pass


class DimensionMismatchError(BlockCovError, ValueError):
    pass


class InsufficientDofError(BlockCovError, ValueError):
    pass


class ParityUnsupportedError(BlockCovError, ValueError):
    """The exact moment expansion needs an integer half-exponent."""


class SingularSystemError(BlockCovError):
    pass


class NegativeCoefficientError(BlockCovError):
    pass


class SingularScatterError(BlockCovError):
    pass


class ParseError(BlockCovError, ValueError):
    pass


class DegenerateSpectrumWarning(UserWarning):
    """Two eigenvalues coincide to within relative tolerance 1e-10."""
