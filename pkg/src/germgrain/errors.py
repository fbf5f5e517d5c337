"""Exception types raised across the package."""


class ParameterError(ValueError):
    """A parameter lies outside the domain where an operation is defined."""


class DivergentMomentError(ParameterError):
    """A truncated moment was requested on the side where it diverges."""


class DimensionError(ValueError):
    """Objects of different dimension were combined, or a dimension is unsupported."""


class SingularityError(ValueError):
    """A kernel was evaluated at its singular point."""


class QuadratureError(RuntimeError):
    """An adaptive quadrature did not reach the requested tolerance."""


class ContractViolation(RuntimeError):
    """A realization was used outside the region it was simulated for."""


class IndefiniteGramError(RuntimeError):
    """A covariance matrix could not be factorized within the jitter cap."""


class GridError(ValueError):
    """Test measures do not align with the requested stable-field grid."""


class ConfigurationError(ValueError):
    """An experiment configuration is inconsistent (e.g. wrong normalizer for a law)."""


class InfiniteVarianceError(ValueError):
    """A second-moment statistic was requested for an infinite-variance regime."""
