"""
Mean models and matrix-normal data generators for simulation studies.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike

from kmeans_selective.core.errors import DimensionError, InvalidArgumentError
from kmeans_selective.covariance import CovarianceFactors
from kmeans_selective.kmeans_trace import DataMatrix, FloatArray, LabelArray, make_generator
from kmeans_selective.schemas.experiment import MeanModel, check_model_dimensions


def gen_matrix_normal(mu: ArrayLike, sigma: float, seed: int) -> DataMatrix:
    """Draw X ~ MN(mu, I_n, sigma^2 I_q): independent N(mu_ij, sigma^2) entries."""
    mean = np.asarray(mu, dtype=np.float64)
    if mean.ndim != 2:
        raise DimensionError("mean matrix must be two-dimensional")
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    rng = make_generator(seed)
    return DataMatrix(mean + sigma * rng.standard_normal(mean.shape))


def gen_matrix_normal_cov(mu: ArrayLike, factors: CovarianceFactors, seed: int) -> DataMatrix:
    """Draw X ~ MN(mu, I_n, Sigma): rows independent N(mu_i, Sigma)."""
    mean = np.asarray(mu, dtype=np.float64)
    if mean.ndim != 2 or mean.shape[1] != factors.q:
        raise DimensionError(f"mean matrix must have {factors.q} columns")
    rng = make_generator(seed)
    return DataMatrix(mean + rng.standard_normal(mean.shape) @ factors.sqrt)


def _blocks(n: int, rows: FloatArray) -> FloatArray:
    """Repeat each of the three block means n/3 times."""
    if n % 3:
        raise InvalidArgumentError(f"n must be divisible by 3, got {n}")
    return np.repeat(rows, n // 3, axis=0)


def mu_global_null(n: int, q: int) -> FloatArray:
    return np.zeros((n, q), dtype=np.float64)


def mu_spike(n: int, q: int, delta: float) -> FloatArray:
    """
    Three equal blocks at pairwise distance delta.

    Block means (-delta/2, 0, ...), (0, ..., sqrt(3) delta / 2) and (delta/2, 0, ...).
    """
    if q < 2:
        raise InvalidArgumentError(f"spike model needs q >= 2, got {q}")
    rows = np.zeros((3, q), dtype=np.float64)
    rows[0, 0] = -delta / 2.0
    rows[1, q - 1] = math.sqrt(3.0) * delta / 2.0
    rows[2, 0] = delta / 2.0
    return _blocks(n, rows)


def mu_ortho_theta(n: int, q: int, delta: float) -> FloatArray:
    """
    Three blocks with means theta_1, theta_2, theta_3, theta_i = sqrt(delta / 2) e_i.

    Requires q a multiple of 10 with q / 10 >= 3.
    """
    if q % 10 or q // 10 < 3:
        raise InvalidArgumentError(f"ortho_theta model needs q % 10 == 0 and q >= 30, got {q}")
    rows = np.zeros((3, q), dtype=np.float64)
    for i in range(3):
        rows[i, i] = math.sqrt(delta / 2.0)
    return _blocks(n, rows)


def mu_three_clusters(n: int = 30) -> FloatArray:
    """Fixed two-dimensional layout: blocks at (2.5, 0), (0, -2.5), (sqrt(18.75), 0)."""
    rows = np.array([[2.5, 0.0], [0.0, -2.5], [math.sqrt(18.75), 0.0]])
    return _blocks(n, rows)


def mean_matrix(model: MeanModel | str, n: int, q: int, delta: float = 0.0) -> FloatArray:
    """Mean matrix for a named model."""
    kind = MeanModel(model)
    try:
        check_model_dimensions(kind, n, q)
    except ValueError as exc:
        raise InvalidArgumentError(str(exc)) from None
    if kind == MeanModel.GLOBAL_NULL:
        return mu_global_null(n, q)
    if kind == MeanModel.SPIKE:
        return mu_spike(n, q, delta)
    if kind == MeanModel.ORTHO_THETA:
        return mu_ortho_theta(n, q, delta)
    return mu_three_clusters(n)


def true_partition(n: int) -> LabelArray:
    """Block labels 1, 2, 3 for the three-block models."""
    if n % 3:
        raise InvalidArgumentError(f"n must be divisible by 3, got {n}")
    return np.repeat(np.arange(1, 4, dtype=np.int64), n // 3)


def true_pair_recovered(labels: ArrayLike, pair: tuple[int, int], truth: ArrayLike) -> bool:
    """Whether both estimated clusters in ``pair`` coincide exactly with true blocks."""
    lab = np.asarray(labels, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    blocks = [set(np.flatnonzero(true == b).tolist()) for b in np.unique(true)]
    for k in pair:
        members = set(np.flatnonzero(lab == k).tolist())
        if members not in blocks:
            return False
    return True


def effect_size(mu: ArrayLike, nu: ArrayLike) -> float:
    """||mu^T nu||: the true mean difference the test targets."""
    return float(np.linalg.norm(np.asarray(mu, dtype=np.float64).T @ np.asarray(nu, dtype=np.float64)))
