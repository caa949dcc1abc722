"""Exception types shared across the package."""


class RankShrinkError(Exception):
    """Base class for all rankshrink errors."""


class DuplicateEntry(RankShrinkError):
    pass


class IndexOutOfRange(RankShrinkError):
    pass


class EmptyObservations(RankShrinkError):
    pass


class NoEligibleRows(RankShrinkError):
    pass


class NegativeVariance(RankShrinkError):
    pass


class NotPositiveDefinite(RankShrinkError):
    pass


class InvalidParameter(RankShrinkError):
    pass


class NumericalUnderflow(RankShrinkError):
    pass


class UncoveredLevels(RankShrinkError):
    pass


class InfeasibleMask(RankShrinkError):
    pass


class ShapeMismatch(RankShrinkError):
    pass


class ZeroVariance(RankShrinkError):
    pass


class EmptySlice(RankShrinkError):
    pass


class UnsupportedFormat(RankShrinkError):
    pass
