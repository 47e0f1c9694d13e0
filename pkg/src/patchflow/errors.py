"""Exception and warning types shared across the package."""


class PatchflowError(Exception):
    """Base class for all patchflow errors."""


class GeometryError(PatchflowError, ValueError):
    """Invalid or degenerate contour geometry."""


class NonConvexError(GeometryError):
    """Operation requires a convex contour."""


class FitError(PatchflowError, ValueError):
    """Ellipse fit failed (degenerate moment matrix)."""


class GeometryBreakdown(PatchflowError, RuntimeError):
    """The evolving contour self-intersected; carries the breakdown time."""

    def __init__(self, time, message=None):
        self.time = time
        super().__init__(message or f"contour self-intersection at t={time:.6g}")


class SingularEvaluation(PatchflowError, ValueError):
    """Kernel or field evaluated at a singular location."""


class SingularStateError(PatchflowError, ValueError):
    """Ellipse ODE right-hand side evaluated at a = b with sin(2*theta) != 0."""


class ConfigError(PatchflowError, ValueError):
    """Invalid run configuration."""


class ResolutionError(PatchflowError, ValueError):
    """Quadrature resolution insufficient for the requested evaluation."""


class ResolutionWarning(UserWarning):
    """Quadrature resolution is marginal; results may lose accuracy."""
