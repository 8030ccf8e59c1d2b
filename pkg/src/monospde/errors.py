"""Exception types raised by the library."""


class ConfigurationError(ValueError):
    """Inconsistent or degenerate problem setup."""


class SolverError(RuntimeError):
    """A time-stepping or Newton solve failed."""


class NumericalError(RuntimeError):
    """Ill-conditioned linear algebra (e.g. a rank-deficient regression)."""


class CapabilityError(RuntimeError):
    """An operation was requested outside the hypotheses that justify it."""


class OptimizerError(RuntimeError):
    """The line search could not produce descent."""
