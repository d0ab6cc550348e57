"""Typed errors raised across the package.

Every failure a caller may want to branch on has its own class; they all
derive from ``OsgError`` so the CLI can map them to exit code 1.
"""


class OsgError(Exception):
    """Base class for all package errors."""


# geometry
class AngleNearPi(OsgError, ValueError):
    pass


class CovarianceNotPsd(OsgError, ValueError):
    pass


class NonPositiveDepth(OsgError, ValueError):
    pass


class PixelOutOfBounds(OsgError, ValueError):
    pass


class TooFewPoints(OsgError, ValueError):
    pass


# scene model
class MalformedDocument(OsgError, ValueError):
    pass


class InvariantViolation(OsgError, ValueError):
    def __init__(self, invariant: str, where: str = ""):
        self.invariant = invariant
        self.where = where
        super().__init__(f"{invariant} ({where})" if where else invariant)


# fusion
class EmptyAfterDepthFilter(OsgError, ValueError):
    pass


class TooFewSamples(OsgError, ValueError):
    pass


class BothZeroVectors(OsgError, ValueError):
    pass


# best view
class NoCandidates(OsgError, ValueError):
    pass


# model clients
class ClientUnavailable(OsgError, RuntimeError):
    pass


class ClientMalformedReply(OsgError, RuntimeError):
    pass


class EmptyInput(OsgError, ValueError):
    pass


class UnresolvableReference(OsgError, FileNotFoundError):
    pass


# vector store
class EmptyDatabase(OsgError, ValueError):
    pass


class MalformedFile(OsgError, ValueError):
    pass


class VersionMismatch(OsgError, ValueError):
    pass


# tasks
class NoMatchingInstance(OsgError, LookupError):
    pass


class NoMentionedObjects(OsgError, LookupError):
    pass


class PlanParseFailure(OsgError, ValueError):
    pass


class UnboundTarget(OsgError, LookupError):
    pass


# synthetic scenes
class PlacementOverflow(OsgError, RuntimeError):
    pass
