"""Exception types raised by the bias model and its pipelines."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class GrazingGeometryError(DomainError):
    """A beam ray is parallel to, or points away from, the target plane."""


class PeakWindowError(RuntimeError):
    """The sampled waveform has its maximum on a window boundary."""


class QuadratureError(RuntimeError):
    """Numerical integration failed to converge to the requested tolerance."""

    def __init__(self, message, estimate=None, error_bound=None):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


class NoRealPeakError(ValueError):
    """The cubic peak approximation has no real local maximum."""


class DegenerateFitError(ValueError):
    """The regression design is rank deficient; scale factors are not identifiable."""


class FitFailureError(RuntimeError):
    """A nonlinear baseline fit did not converge within its search budget."""


class AlreadyCorrectedError(ValueError):
    """A point cloud carrying the corrected provenance flag was passed for correction again."""
