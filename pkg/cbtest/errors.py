"""Exception hierarchy shared by the library, the CLI and the HTTP service."""


class CbtestError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ConfigError(CbtestError):
    """Bad configuration, flags, specs or environment variables."""

    exit_code = 2


class DomainError(CbtestError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 2


class DataError(CbtestError):
    """Input data could not be parsed or is unusable."""

    exit_code = 3


class NumericalError(CbtestError):
    """A numerical routine failed (non-finite values, bad envelopes, ...)."""

    exit_code = 4


class DegenerateDirectionError(NumericalError):
    """A direction or kernel has zero norm or variance."""
