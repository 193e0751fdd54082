"""Exception hierarchy shared by all modules."""


class UDFError(Exception):
    """Base class for every error raised by this package."""


class NormSpecError(UDFError, ValueError):
    """A norm specification could not be parsed."""


class NonFinite(UDFError, ValueError):
    pass


class ZeroVector(UDFError, ValueError):
    pass


class NotOnBoundary(UDFError, ValueError):
    pass


class NotStrictlyConvex(UDFError, ValueError):
    pass


class OutOfRange(UDFError, ValueError):
    pass


class BisectionFailure(UDFError, RuntimeError):
    pass


class SeedExhausted(UDFError, RuntimeError):
    pass


class NoConvergence(UDFError, RuntimeError):
    pass


class ApSearchFailed(UDFError, RuntimeError):
    pass


class UnitCertificateFailed(UDFError, RuntimeError):
    pass


class Overflow(UDFError, ValueError):
    """Materialization would exceed the configured tuple cap."""


class TooLarge(UDFError, ValueError):
    """Quadratic-cost operation refused for a large input."""


class OffsetExhausted(UDFError, RuntimeError):
    pass


class SegmentTooShort(UDFError, ValueError):
    pass


class HUnderflow(UDFError, RuntimeError):
    pass


class RootLost(UDFError, RuntimeError):
    def __init__(self, k, msg=""):
        self.k = k
        super().__init__(f"root {k} lost{': ' + msg if msg else ''}")


class NoSegment(UDFError, ValueError):
    """A construction needing a flat boundary piece got a strictly convex norm."""
