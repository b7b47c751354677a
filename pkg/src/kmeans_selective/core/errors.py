"""
Exception hierarchy.

Every error carries a stable ``kind`` (used in machine-readable error
payloads) and the process ``exit_code`` the CLI returns for it:
2 usage, 3 data, 4 numerical degeneracy.
"""
from typing import Any

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class KMeansSelectiveError(Exception):
    """Base class for all package errors."""

    kind: str = "error"
    exit_code: int = 1

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        """Error payload for JSON output."""
        payload: dict[str, Any] = {"error": self.kind, "message": self.message}
        if self.details:
            payload["details"] = self.details
        return payload


# Usage


class InvalidArgumentError(KMeansSelectiveError, ValueError):
    """An argument violates a documented precondition."""

    kind = "invalid_argument"
    exit_code = EXIT_USAGE


class ConfigError(KMeansSelectiveError):
    """An experiment configuration key is missing or invalid."""

    kind = "config"
    exit_code = EXIT_USAGE

    def __init__(self, message: str, key: str | None = None, line: int | None = None) -> None:
        where = ""
        if key is not None:
            where = f"key '{key}'"
            if line is not None:
                where += f" (line {line})"
            where += ": "
        super().__init__(f"{where}{message}", key=key, line=line)
        self.key = key
        self.line = line


# Data


class DataError(KMeansSelectiveError):
    """Input data could not be used."""

    kind = "data"
    exit_code = EXIT_DATA


class DataParseError(DataError):
    """A data file could not be parsed."""

    kind = "parse"


class DimensionError(DataError):
    """Array shapes are inconsistent."""

    kind = "dimension"


class NonSymmetricCovarianceError(DataError):
    """Covariance matrix is not symmetric within tolerance."""

    kind = "covariance"


class NotPositiveDefiniteError(DataError):
    """Covariance matrix (plus ridge) is not positive definite."""

    kind = "covariance"


# Numerical degeneracy


class EmptyClusterError(KMeansSelectiveError):
    """A cluster lost all of its members during a Lloyd run."""

    kind = "empty_cluster"
    exit_code = EXIT_NUMERICAL

    def __init__(self, cluster: int, iteration: int | None = None) -> None:
        message = f"cluster {cluster} is empty"
        if iteration is not None:
            message += f" at iteration {iteration}"
        super().__init__(message, cluster=cluster, iteration=iteration)
        self.cluster = cluster
        self.iteration = iteration


class DegenerateContrastError(KMeansSelectiveError):
    """The two tested cluster means coincide, so the path direction is undefined."""

    kind = "degenerate_contrast"
    exit_code = EXIT_NUMERICAL


class DegenerateSupportError(KMeansSelectiveError):
    """A truncated distribution has zero mass on its support."""

    kind = "degenerate_support"
    exit_code = EXIT_NUMERICAL


class NumericalConsistencyError(KMeansSelectiveError):
    """A computed quantity contradicts an identity it must satisfy."""

    kind = "numerical_consistency"
    exit_code = EXIT_NUMERICAL
