"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class CourtcoxError(Exception):
    """Base class for all package errors."""


class ConfigError(CourtcoxError):
    """Bad configuration, unusable request, or inconsistent settings."""


class DataError(CourtcoxError):
    """Malformed or inconsistent input data."""


class NumericalError(CourtcoxError):
    """Numerical failure: divergence, envelope violation, non-finite state."""


class EnvelopeViolation(NumericalError):
    """Rejection-sampling envelope was exceeded by the target intensity."""


class ChainDivergence(NumericalError):
    """MCMC produced a non-finite state; carries diagnostic context."""

    def __init__(self, message, iteration=None, block=None, proposal=None):
        super().__init__(message)
        self.iteration = iteration
        self.block = block
        self.proposal = proposal
