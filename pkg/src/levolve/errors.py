"""Exception hierarchy shared by all levolve modules."""


class LevolveError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LevolveError):
    """A time or coordinate lies outside the geometry's declared domain."""


class ConfigError(LevolveError):
    """An object was constructed with unusable parameters."""


class NoConvergence(LevolveError):
    """An iterative solve exhausted its budget without meeting tolerance."""


class NearCutLocus(LevolveError):
    """The minimizing curve is numerically non-unique; derivative data unusable."""


class ConjugatePoint(LevolveError):
    """The endpoint-map Jacobian degenerated (determinant crossed zero)."""


class StabilityError(LevolveError):
    """The explicit time-step bound collapsed below the usable floor."""


class NegativeDensity(LevolveError):
    """An evolved density dipped below the negativity floor."""


class NonPositiveDensity(LevolveError):
    """An operation requiring strictly positive densities received zeros."""


class TransportInfeasible(LevolveError):
    """Marginals cannot be coupled (total masses differ)."""


class NonFiniteCost(LevolveError):
    """A cost matrix contains NaN or infinite entries."""


class InvalidFieldEntry(LevolveError):
    """A distance-field entry needed by a monitor is marked invalid."""


class ParseError(LevolveError):
    """A config file could not be parsed."""


class SemanticError(LevolveError):
    """A config file parsed but violates a semantic constraint."""
