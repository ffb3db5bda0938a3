"""Exception hierarchy; every class carries the process exit code the CLI reports."""


class ExtremesError(Exception):
    """Base class for all toolkit errors."""

    exit_code: int = 1


class InvalidArgumentError(ExtremesError, ValueError):
    """An argument violates an operation precondition."""

    exit_code = 2


class NoClustersError(ExtremesError, ValueError):
    """No (qualifying) clusters exist at the resolved threshold."""

    exit_code = 3

    def __init__(self, message: str = "no clusters at this threshold"):
        super().__init__(message)


class ConfigurationError(ExtremesError, ValueError):
    """Config file missing, unreadable or referencing missing files."""

    exit_code = 4


class ZeroDenominatorError(ExtremesError, ValueError):
    """A ratio estimator was evaluated with an empty conditioning event."""

    exit_code = 5


# Data format errors

class MagicMismatchError(ExtremesError, ValueError):
    exit_code = 10


class UnsupportedVersionError(ExtremesError, ValueError):
    exit_code = 11


class TruncatedPayloadError(ExtremesError, ValueError):
    exit_code = 12

    def __init__(self, message: str = "truncated payload"):
        super().__init__(message)


class NonDenseSeriesError(ExtremesError, ValueError):
    exit_code = 13

    def __init__(self, message: str = "non-dense series"):
        super().__init__(message)


class MissingValueError(ExtremesError, ValueError):
    exit_code = 14


# Numerical failures

class FactorizationError(ExtremesError, RuntimeError):
    """Covariance not positive semidefinite after jitter escalation."""

    exit_code = 20


class TemporallyDegenerateError(ExtremesError, RuntimeError):
    """Oracle denominator indistinguishable from zero."""

    exit_code = 21


class DegenerateBootstrapError(ExtremesError, RuntimeError):
    """Every bootstrap replicate had a nonpositive denominator."""

    exit_code = 22


class RankDeficientError(ExtremesError, RuntimeError):
    """Regression design is rank deficient for a site."""

    exit_code = 23

    def __init__(self, site: int, rank: int, n_columns: int):
        self.site = site
        super().__init__(
            f"design matrix rank deficient at site {site} (rank {rank} < {n_columns})"
        )
