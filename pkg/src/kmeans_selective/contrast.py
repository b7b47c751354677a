"""
Contrast between two estimated clusters and the one-parameter data path
x'(phi) that moves only the observed difference in their means.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from kmeans_selective.core.errors import (
    DegenerateContrastError,
    DimensionError,
    EmptyClusterError,
    InvalidArgumentError,
    NumericalConsistencyError,
)
from kmeans_selective.kmeans_trace import DataMatrix, FloatArray, as_values

# Tolerance for checking that supplied covariance factors are mutual inverses.
FACTOR_ATOL = 1e-8


def contrast_vector(labels: ArrayLike, k1: int, k2: int) -> FloatArray:
    """
    nu_i = 1{c_i = k1}/|C_k1| - 1{c_i = k2}/|C_k2|.

    ``x.T @ nu`` is the difference of the two cluster means.
    """
    if k1 == k2:
        raise InvalidArgumentError(f"cluster pair must be distinct, got ({k1}, {k2})")
    lab = np.asarray(labels, dtype=np.int64)
    in1 = lab == k1
    in2 = lab == k2
    n1 = int(in1.sum())
    n2 = int(in2.sum())
    if n1 == 0:
        raise EmptyClusterError(cluster=k1)
    if n2 == 0:
        raise EmptyClusterError(cluster=k2)
    return in1 / n1 - in2 / n2


@dataclass(frozen=True, slots=True)
class ContrastContext:
    """Everything the data path needs for one tested pair."""

    x: DataMatrix
    pair: tuple[int, int]
    nu: FloatArray
    nu_norm_sq: float
    mean_diff: FloatArray
    stat: float
    direction: FloatArray

    @classmethod
    def build(cls, x: DataMatrix, labels: ArrayLike, k1: int, k2: int) -> ContrastContext:
        if not isinstance(x, DataMatrix):
            x = DataMatrix(np.asarray(x, dtype=np.float64))
        lab = np.asarray(labels, dtype=np.int64)
        if lab.shape != (x.n,):
            raise DimensionError(f"labels length {lab.shape} does not match n={x.n}")
        nu = contrast_vector(lab, k1, k2)
        nu.setflags(write=False)
        mean_diff = x.values.T @ nu
        stat = float(np.linalg.norm(mean_diff))
        direction = mean_diff / stat if stat > 0 else np.zeros_like(mean_diff)
        mean_diff.setflags(write=False)
        direction.setflags(write=False)
        return cls(
            x=x,
            pair=(int(k1), int(k2)),
            nu=nu,
            nu_norm_sq=float(nu @ nu),
            mean_diff=mean_diff,
            stat=stat,
            direction=direction,
        )

    @property
    def nu_norm(self) -> float:
        return float(np.sqrt(self.nu_norm_sq))

    def orthogonal_component(self) -> FloatArray:
        """The part of x left unchanged along the path: x - nu (x^T nu)^T / ||nu||^2."""
        return self.x.values - np.outer(self.nu / self.nu_norm_sq, self.mean_diff)

    def whitened_stat(self, sigma_inv_sqrt: ArrayLike) -> float:
        """||Sigma^{-1/2} x^T nu||."""
        inv_sqrt = np.asarray(sigma_inv_sqrt, dtype=np.float64)
        return float(np.linalg.norm(inv_sqrt @ self.mean_diff))

    def whitening_ratio(self, sigma_inv_sqrt: ArrayLike) -> float:
        """
        r = ||x^T nu|| / ||Sigma^{-1/2} x^T nu||.

        The covariance-aware path at phi equals the spherical path at r * phi.
        """
        self.require_direction()
        return self.stat / self.whitened_stat(sigma_inv_sqrt)

    def require_direction(self) -> None:
        if self.stat == 0.0:
            raise DegenerateContrastError(
                f"clusters {self.pair[0]} and {self.pair[1]} have identical means"
            )


def _check_phi(phi: float) -> float:
    phi = float(phi)
    if not np.isfinite(phi) or phi < 0:
        raise InvalidArgumentError(f"phi must be finite and >= 0, got {phi}")
    return phi


def perturbed_values(ctx: ContrastContext, phi: float) -> FloatArray:
    """Array form of :func:`perturbed_data`."""
    phi = _check_phi(phi)
    ctx.require_direction()
    return ctx.x.values + (phi - ctx.stat) * np.outer(ctx.nu / ctx.nu_norm_sq, ctx.direction)


def perturbed_data(ctx: ContrastContext, phi: float) -> DataMatrix:
    """x'(phi) = x + (phi - stat) (nu / ||nu||^2) dir^T."""
    return DataMatrix(perturbed_values(ctx, phi))


def check_factors(sigma_inv_sqrt: ArrayLike, sigma_sqrt: ArrayLike, q: int) -> tuple[FloatArray, FloatArray]:
    inv_sqrt = np.asarray(sigma_inv_sqrt, dtype=np.float64)
    sqrt = np.asarray(sigma_sqrt, dtype=np.float64)
    if inv_sqrt.shape != (q, q) or sqrt.shape != (q, q):
        raise DimensionError(f"covariance factors must be {q}x{q}")
    if not np.allclose(sqrt @ inv_sqrt, np.eye(q), atol=FACTOR_ATOL, rtol=0.0):
        raise NumericalConsistencyError("sigma_sqrt and sigma_inv_sqrt are not inverses")
    return inv_sqrt, sqrt


def perturbed_values_sigma(
    ctx: ContrastContext,
    phi: float,
    sigma_inv_sqrt: ArrayLike,
    sigma_sqrt: ArrayLike,
) -> FloatArray:
    """Array form of :func:`perturbed_data_sigma`."""
    phi = _check_phi(phi)
    ctx.require_direction()
    inv_sqrt, sqrt = check_factors(sigma_inv_sqrt, sigma_sqrt, ctx.x.q)
    white = inv_sqrt @ ctx.mean_diff
    white_dir = white / np.linalg.norm(white)
    return ctx.orthogonal_component() + (phi / ctx.nu_norm_sq) * np.outer(ctx.nu, sqrt @ white_dir)


def perturbed_data_sigma(
    ctx: ContrastContext,
    phi: float,
    sigma_inv_sqrt: ArrayLike,
    sigma_sqrt: ArrayLike,
) -> DataMatrix:
    """
    Covariance-aware path.

    Keeps the orthogonal component and places the whitened mean difference
    at length phi along dir(Sigma^{-1/2} x^T nu), mapped back by Sigma^{1/2}.
    """
    return DataMatrix(perturbed_values_sigma(ctx, phi, sigma_inv_sqrt, sigma_sqrt))


def contrast_context(x: DataMatrix | ArrayLike, labels: ArrayLike, k1: int, k2: int) -> ContrastContext:
    """Build the context for testing clusters ``k1`` and ``k2``."""
    data = x if isinstance(x, DataMatrix) else DataMatrix(as_values(x))
    return ContrastContext.build(data, labels, k1, k2)
