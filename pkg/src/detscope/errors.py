"""Exception hierarchy shared by all detscope modules."""


class DetscopeError(Exception):
    """Base class for library errors."""


class NotDifferentiable(DetscopeError):
    """Gradient or alpha_1 requested for a potential without C^2 regularity."""


class QuadratureNotConverged(DetscopeError):
    pass


class ResolutionTooLarge(DetscopeError):
    pass


class SingularAtEigenvalue(DetscopeError):
    """I + Q0(k) is numerically singular: k sits on a zero of D."""


class EigenSolveFailed(DetscopeError):
    pass


class BranchJumpDetected(DetscopeError):
    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class PoleHit(DetscopeError):
    pass


class BoundaryNearZero(DetscopeError):
    pass


class DepthLimitExceeded(DetscopeError):
    pass


class ZeroAtOrigin(DetscopeError):
    pass


class TailNotConverged(DetscopeError):
    """The analytic tail of a trace-formula integral is not stable.

    ``partial`` carries whatever report was assembled before the failure.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class FitUnstable(DetscopeError):
    pass


class BoxTooSmall(DetscopeError):
    pass
