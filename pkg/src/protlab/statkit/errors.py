"""Exceptions raised by statkit procedures."""

from ..core.errors import ProtlabError


class StatkitError(ProtlabError):
    """Base exception for statistical procedure errors."""

    pass


class OutOfRange(StatkitError):
    """Raised when an input p-value lies outside [0, 1]."""

    pass


class LengthMismatch(StatkitError):
    """Raised when paired vectors differ in length."""

    pass


class ZeroVariance(StatkitError):
    """Raised when a vector has no variance."""

    pass


class TooShort(StatkitError):
    """Raised when a vector is too short for the test."""

    pass


class KTooLarge(StatkitError):
    """Raised when more clusters are requested than there are rows."""

    pass


class UnknownCluster(StatkitError):
    """Raised when a cluster label does not occur in a clustering."""

    pass


class EmptyGroup(StatkitError):
    """Raised when a contrast side selects no samples."""

    pass


class TooFewSamples(StatkitError):
    """Raised when a contrast side has fewer than two samples."""

    pass


class FocusWithoutStratification(StatkitError):
    """Raised when focus cell types are given for an unstratified analysis."""

    pass


class NoEvents(StatkitError):
    """Raised when a survival vector contains no events."""

    pass


class ConstantExpression(StatkitError):
    """Raised when a survival covariate has a single distinct value."""

    pass


class AllSplitsDegenerate(StatkitError):
    """Raised when every percentile split leaves one group empty."""

    pass


class NonConvergence(StatkitError):
    """Raised when Newton iterations for the Cox model do not converge."""

    def __init__(self, message: str, separation: bool = False):
        self.separation = separation
        super().__init__(message)


class NegativeAfterShift(StatkitError):
    """Raised if a shifted NMF input still holds negative values."""

    pass


class EmptyQuery(StatkitError):
    """Raised when an ORA query is empty."""

    pass


class QueryOutsideUniverse(StatkitError):
    """Raised when ORA query members are missing from the universe."""

    pass


class SetCoversWholeList(StatkitError):
    """Raised when a gene set contains every ranked protein."""

    pass


class EmptyIntersection(StatkitError):
    """Raised when a gene set shares nothing with the ranked list."""

    pass


class MalformedGeneSetFile(StatkitError):
    """Raised when a GMT line cannot be parsed."""

    pass
