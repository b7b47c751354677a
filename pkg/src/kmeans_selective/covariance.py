"""
Symmetric square-root factors of a known feature covariance, and whitening.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from kmeans_selective.core.errors import (
    DimensionError,
    InvalidArgumentError,
    NonSymmetricCovarianceError,
    NotPositiveDefiniteError,
    NumericalConsistencyError,
)
from kmeans_selective.core.logging import get_logger
from kmeans_selective.kmeans_trace import DataMatrix, FloatArray, as_values

logger = get_logger(__name__)

SYMMETRY_TOL = 1e-10
EIGEN_FLOOR = 1e-12
INVERSE_ATOL = 1e-8


@dataclass(frozen=True, slots=True)
class CovarianceFactors:
    """Sigma together with Sigma^{1/2} and Sigma^{-1/2} (both symmetric)."""

    sigma: FloatArray
    sqrt: FloatArray
    inv_sqrt: FloatArray
    ridge: float = 0.0

    @property
    def q(self) -> int:
        return int(self.sigma.shape[0])

    @classmethod
    def spherical(cls, q: int, sigma: float) -> CovarianceFactors:
        """Factors of sigma^2 I_q."""
        if not sigma > 0:
            raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
        eye = np.eye(q)
        return cls(sigma=sigma * sigma * eye, sqrt=sigma * eye, inv_sqrt=eye / sigma)


def factorize(sigma: ArrayLike, ridge: float = 0.0) -> CovarianceFactors:
    """
    Eigen-decompose Sigma + ridge I and return its symmetric square roots.

    Inputs asymmetric by at most 1e-10 are symmetrized first.
    """
    cov = np.array(sigma, dtype=np.float64, copy=True)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise NotPositiveDefiniteError("covariance contains non-finite entries")
    if ridge < 0:
        raise InvalidArgumentError(f"ridge must be >= 0, got {ridge}")
    asym = float(np.max(np.abs(cov - cov.T))) if cov.size else 0.0
    if asym > SYMMETRY_TOL:
        raise NonSymmetricCovarianceError(
            f"covariance is not symmetric (max asymmetry {asym:.3g})", asymmetry=asym
        )
    cov = (cov + cov.T) / 2.0

    eigvals, eigvecs = np.linalg.eigh(cov)
    shifted = eigvals + ridge
    if shifted.min() <= EIGEN_FLOOR:
        raise NotPositiveDefiniteError(
            f"covariance + ridge is not positive definite (min eigenvalue {shifted.min():.3g})",
            min_eigenvalue=float(shifted.min()),
        )
    root = np.sqrt(shifted)
    sqrt = (eigvecs * root) @ eigvecs.T
    inv_sqrt = (eigvecs / root) @ eigvecs.T
    sqrt = (sqrt + sqrt.T) / 2.0
    inv_sqrt = (inv_sqrt + inv_sqrt.T) / 2.0

    if not np.allclose(sqrt @ inv_sqrt, np.eye(cov.shape[0]), atol=INVERSE_ATOL, rtol=0.0):
        raise NumericalConsistencyError("covariance is too ill-conditioned to factor; add a ridge")
    for arr in (cov, sqrt, inv_sqrt):
        arr.setflags(write=False)
    logger.debug(
        "covariance_factored",
        q=cov.shape[0],
        ridge=ridge,
        condition=float(shifted.max() / shifted.min()),
    )
    return CovarianceFactors(sigma=cov, sqrt=sqrt, inv_sqrt=inv_sqrt, ridge=float(ridge))


def whiten(x: DataMatrix | ArrayLike, factors: CovarianceFactors) -> DataMatrix:
    """x Sigma^{-1/2}: rows with covariance Sigma become isotropic."""
    values = as_values(x)
    if values.shape[1] != factors.q:
        raise DimensionError(
            f"data has q={values.shape[1]} columns but covariance is {factors.q}x{factors.q}"
        )
    return DataMatrix(values @ factors.inv_sqrt)
