"""Exception and warning types raised across the package."""


class CurveMatchError(Exception):
    pass


class DegenerateCurve(CurveMatchError, ValueError):
    """A curve has (near) vanishing speed at some quadrature site.

    ``site`` holds the offending ``(t, theta)`` pair, or ``(None, theta)``
    for single curves.
    """

    def __init__(self, message, site=None):
        super().__init__(message)
        self.site = site


class RankDeficient(CurveMatchError, ValueError):
    pass


class ZeroEdge(CurveMatchError, ValueError):
    pass


class NonFiniteValue(CurveMatchError, FloatingPointError):
    pass


class LineSearchFailed(CurveMatchError):
    pass


class OptimizationFailed(CurveMatchError):
    """Raised by the multigrid driver; ``level`` is the failing level index."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


class DisconnectedGraph(UserWarning):
    pass
