"""
Calibration checks: uniformity summaries for null p-values and a
rejection-sampling estimate of the selective p-value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy import stats

from kmeans_selective.contrast import ContrastContext
from kmeans_selective.core.errors import InvalidArgumentError
from kmeans_selective.kmeans_trace import ClusterTrace, make_generator
from kmeans_selective.truncation import oracle_membership


@dataclass(frozen=True, slots=True)
class UniformitySummary:
    """Kolmogorov-Smirnov comparison of p-values against Uniform(0, 1)."""

    tests: int
    statistic: float
    pvalue: float
    critical_1pct: float

    @property
    def rejected_1pct(self) -> bool:
        return self.statistic > self.critical_1pct


def ks_uniformity(p_values: ArrayLike) -> UniformitySummary:
    """KS statistic, its p-value, and the 1% critical value for this sample size."""
    arr = np.asarray(p_values, dtype=np.float64)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        raise InvalidArgumentError("no finite p-values to test")
    result = stats.kstest(arr, "uniform")
    return UniformitySummary(
        tests=int(arr.size),
        statistic=float(result.statistic),
        pvalue=float(result.pvalue),
        critical_1pct=float(stats.kstwo.ppf(0.99, arr.size)),
    )


def qq_points(p_values: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Sorted p-values against Uniform(0, 1) plotting positions i / (m + 1)."""
    arr = np.sort(np.asarray(p_values, dtype=np.float64))
    arr = arr[np.isfinite(arr)]
    m = arr.size
    return np.arange(1, m + 1) / (m + 1.0), arr


@dataclass(frozen=True, slots=True)
class MonteCarloEstimate:
    """Rejection-sampling estimate of a conditional tail probability."""

    p_value: float
    standard_error: float
    accepted: int
    draws: int


def conditional_monte_carlo_p_value(
    trace: ClusterTrace,
    ctx: ContrastContext,
    sigma: float,
    draws: int,
    seed: int,
) -> MonteCarloEstimate:
    """
    Estimate P(phi >= stat | phi in S_T) for phi ~ sigma ||nu|| chi_q.

    Draws from the unconditional law and keeps those for which Lloyd on
    x'(phi) retraces the recorded run. Slow; intended for validation.
    """
    if draws < 1:
        raise InvalidArgumentError(f"draws must be >= 1, got {draws}")
    rng = make_generator(seed)
    phis = sigma * ctx.nu_norm * np.sqrt(rng.chisquare(ctx.x.q, size=draws))
    kept = np.array([phi for phi in phis if oracle_membership(trace, ctx, float(phi))])
    if kept.size == 0:
        return MonteCarloEstimate(math.nan, math.nan, 0, draws)
    p = float(np.mean(kept >= ctx.stat))
    se = math.sqrt(p * (1.0 - p) / kept.size)
    return MonteCarloEstimate(p, se, int(kept.size), draws)
