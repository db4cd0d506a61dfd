"""Exception and warning types raised across the package."""


class QRecoverError(ValueError):
    """Base class for invalid inputs and failed numerical preconditions."""


class NotHermitian(QRecoverError):
    pass


class NotPSD(QRecoverError):
    pass


class NoConvergence(QRecoverError):
    pass


class UnknownLabel(QRecoverError, KeyError):
    def __str__(self):
        return ValueError.__str__(self)


class DimensionMismatch(QRecoverError):
    pass


class DimensionCap(QRecoverError):
    pass


class InvalidState(QRecoverError):
    pass


class NotSymmetric(QRecoverError):
    pass


class TooManyCopies(QRecoverError):
    pass


class TooManyFactors(QRecoverError):
    pass


class BlockMismatch(QRecoverError):
    pass


class OverlappingLabels(QRecoverError):
    pass


class DomainError(QRecoverError):
    pass


class BadDecomposition(QRecoverError):
    pass


class NotTracePreserving(QRecoverError):
    pass


class RankDeficientWarning(UserWarning):
    """The recovery map was completed on the kernel of T(sigma)."""


class DegenerateKWarning(UserWarning):
    """The computed k fell below 1 and was clamped."""
