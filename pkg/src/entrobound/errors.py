"""Exception and warning types shared across the package."""


class EntroboundError(Exception):
    """Base class for all package-specific errors."""


class StabilityError(EntroboundError):
    """AR characteristic roots are on or inside the unit disc (margin 1e-8)."""


class DistributionError(EntroboundError):
    """Innovation distribution is invalid (e.g. Student-t with nu <= 2)."""


class DivergenceError(EntroboundError):
    """A recursive simulation exceeded the overflow guard."""


class LagError(EntroboundError):
    """Requested autocovariance lag is too large for the sample length."""


class SegmentError(EntroboundError):
    """Welch segmentation parameters are inconsistent with the sample."""


class DimensionError(EntroboundError):
    """Operation applied to the wrong dimensionality (scalar vs matrix)."""


class MatrixError(EntroboundError):
    """A spectral matrix is not Hermitian / PSD within tolerance."""


class SingularSpectrumError(EntroboundError):
    """The spectrum has (near-)zeros: the log-integral diverges and the
    one-step bound degenerates to zero."""


class DegenerateProcessError(EntroboundError):
    """Innovation variance collapsed below the floor: the process is
    (numerically) perfectly predictable."""


class HorizonError(EntroboundError):
    """Prediction horizon too large for the sample length."""


class SampleSizeError(EntroboundError):
    """Too few samples for the requested nearest-neighbor estimate."""


class DegenerateSeriesError(EntroboundError):
    """A diagnostic was handed a (numerically) constant series."""


class BoundViolationError(EntroboundError):
    """Achieved error fell below a lower bound by more than the recorded
    Monte Carlo tolerance.  Signals a bug or a bad estimate; never ignored."""


class ConfigError(EntroboundError):
    """Experiment configuration is missing or malformed."""


class NonConvergedWarning(UserWarning):
    """Entropy-rate embedding did not converge at the maximum depth; the
    deepest estimate is returned anyway."""


class DuplicatePointsWarning(UserWarning):
    """Duplicate points were jittered before a nearest-neighbor query."""
