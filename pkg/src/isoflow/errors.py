"""Exception types shared across the package."""


class IsoflowError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(IsoflowError, ValueError):
    """A model parameter is outside its admissible domain."""


class ConfigError(IsoflowError, ValueError):
    """An experiment configuration is invalid or incomplete."""


class FlowOverflowError(IsoflowError, FloatingPointError):
    """Non-finite entries appeared in the working product.

    The pending product between renormalizations grew past floating-point
    range; rerun with a smaller ``qr_period`` (more frequent QR sweeps)
    or a smaller time step.
    """


class DegenerateTrajectoryError(IsoflowError):
    """The accumulated product became numerically rank deficient."""


class SingularityError(IsoflowError, ValueError):
    """Evaluation point too close to a coordinate coincidence."""


class ConditioningError(IsoflowError):
    """A linear system is too ill-conditioned to use reliably."""


class DegenerateDensityError(IsoflowError, ValueError):
    """A requested density collapses to a point mass."""


class DegenerateSourceError(IsoflowError, ValueError):
    """The external-source ensemble is degenerate for these parameters."""


class AccuracyWarning(UserWarning):
    """A numerical estimate is likely dominated by truncation error."""
