"""
Noise-scale estimators for isotropic data, sigma^2 I_q.

The median estimators divide squared deviations by the median of chi^2_1,
so they stay close to sigma when a minority of entries carry signal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from scipy import special

from kmeans_selective.core.errors import InvalidArgumentError
from kmeans_selective.core.logging import get_logger
from kmeans_selective.kmeans_trace import DataMatrix, as_values

logger = get_logger(__name__)


class SigmaMethod(str, Enum):
    """Available sigma estimators."""

    MED = "med"
    MED_UNCENTERED = "med-uncentered"
    SAMPLE = "sample"


@dataclass(frozen=True, slots=True)
class SigmaEstimate:
    """An estimated noise scale and how it was obtained."""

    value: float
    method: SigmaMethod
    n: int
    q: int

    @property
    def degenerate(self) -> bool:
        """Zero estimates cannot scale a test statistic."""
        return self.value == 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "method": self.method.value,
            "n": self.n,
            "q": self.q,
            "degenerate": self.degenerate,
        }


@lru_cache(maxsize=1)
def chi1_median() -> float:
    """Median of chi^2_1 (about 0.4549364), from the inverse regularized gamma."""
    return float(2.0 * special.gammainccinv(0.5, 0.5))


def _estimate(x: DataMatrix | ArrayLike, method: SigmaMethod, value: float) -> SigmaEstimate:
    values = as_values(x)
    est = SigmaEstimate(value=value, method=method, n=values.shape[0], q=values.shape[1])
    if est.degenerate:
        logger.warning("sigma_estimate_degenerate", method=method.value, n=est.n, q=est.q)
    return est


def _center_columns(values: np.ndarray) -> np.ndarray:
    """Subtract column means; constant columns become exactly zero."""
    centered = values - values.mean(axis=0)
    centered[:, np.ptp(values, axis=0) == 0] = 0.0
    return centered


def sigma_med(x: DataMatrix | ArrayLike) -> SigmaEstimate:
    """sqrt(median over entries of (x_ij - median_i x_ij)^2 / M)."""
    values = as_values(x)
    centered = values - np.median(values, axis=0)
    value = math.sqrt(float(np.median(centered**2)) / chi1_median())
    return _estimate(values, SigmaMethod.MED, value)


def sigma_med_uncentered(x: DataMatrix | ArrayLike) -> SigmaEstimate:
    """sqrt(median over entries of x_ij^2 / M); suited to sparse means around zero."""
    values = as_values(x)
    value = math.sqrt(float(np.median(values**2)) / chi1_median())
    return _estimate(values, SigmaMethod.MED_UNCENTERED, value)


def sigma_sample(x: DataMatrix | ArrayLike) -> SigmaEstimate:
    """Pooled sample standard deviation sqrt(sum (x_ij - mean_j)^2 / (n q - q))."""
    values = as_values(x)
    n, q = values.shape
    if n < 2:
        raise InvalidArgumentError(f"sample estimator needs n >= 2, got {n}")
    centered = _center_columns(values)
    value = math.sqrt(float(np.einsum("ij,ij->", centered, centered)) / (n * q - q))
    return _estimate(values, SigmaMethod.SAMPLE, value)


def bias_sample(mu: ArrayLike) -> float:
    """
    E[sigma_sample^2] - sigma^2 for mean matrix ``mu``.

    Equals sum_j sum_i sum_i' (mu_ij - mu_i'j)^2 / (2 n (n-1) q), computed
    through column-centered means.
    """
    means = as_values(mu)
    n, q = means.shape
    if n < 2:
        raise InvalidArgumentError(f"bias needs n >= 2, got {n}")
    centered = _center_columns(means)
    return float(np.einsum("ij,ij->", centered, centered)) / ((n - 1) * q)


_ESTIMATORS = {
    SigmaMethod.MED: sigma_med,
    SigmaMethod.MED_UNCENTERED: sigma_med_uncentered,
    SigmaMethod.SAMPLE: sigma_sample,
}


def estimate_sigma(x: DataMatrix | ArrayLike, method: SigmaMethod | str = SigmaMethod.MED) -> SigmaEstimate:
    """Dispatch to the named estimator."""
    try:
        key = SigmaMethod(method)
    except ValueError:
        raise InvalidArgumentError(f"unknown sigma method: {method}") from None
    return _ESTIMATORS[key](x)
