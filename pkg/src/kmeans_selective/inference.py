"""
Selective and naive p-values for a difference in cluster means.

Under the null, ||x^T nu|| / (sigma ||nu||) is chi with q degrees of freedom;
conditioning on the clustering restricts it to the truncation set S_T.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from scipy import special

from kmeans_selective.contrast import ContrastContext, contrast_context
from kmeans_selective.core.errors import DegenerateSupportError, InvalidArgumentError
from kmeans_selective.core.logging import get_logger
from kmeans_selective.intervals import INF, IntervalSet
from kmeans_selective.kmeans_trace import ClusterTrace, DataMatrix
from kmeans_selective.special import log_gamma_p, log_gamma_q
from kmeans_selective.truncation import truncation_set, truncation_set_sigma

logger = get_logger(__name__)

# Below this linear-scale mass, sums switch to log space.
LINEAR_FLOOR = 1e-300
_LOG_LINEAR_FLOOR = math.log(LINEAR_FLOOR)


class SigmaSource(str, Enum):
    """Where the noise scale came from."""

    KNOWN = "known"
    MED = "med"
    MED_UNCENTERED = "med-uncentered"
    SAMPLE = "sample"
    USER = "user"


def _check_scale(scale: float) -> float:
    scale = float(scale)
    if not (math.isfinite(scale) and scale > 0):
        raise InvalidArgumentError(f"scale must be positive and finite, got {scale}")
    return scale


def _check_dof(q: int) -> int:
    if int(q) != q or q < 1:
        raise InvalidArgumentError(f"degrees of freedom must be a positive integer, got {q}")
    return int(q)


def chi_survival(c: float, q: int, scale: float) -> float:
    """P(scale * chi_q >= c) = Q(q/2, c^2 / (2 scale^2))."""
    q = _check_dof(q)
    scale = _check_scale(scale)
    if c <= 0:
        return 1.0
    return float(special.gammaincc(q / 2.0, (c / scale) ** 2 / 2.0))


def chi_log_survival(c: float, q: int, scale: float) -> float:
    """log P(scale * chi_q >= c), finite far beyond the range of chi_survival."""
    q = _check_dof(q)
    scale = _check_scale(scale)
    if c <= 0:
        return 0.0
    return log_gamma_q(q / 2.0, (c / scale) ** 2 / 2.0)


@dataclass(frozen=True, slots=True)
class TruncatedChi:
    """scale * chi_dof restricted to ``support``."""

    dof: int
    scale: float
    support: IntervalSet

    def __post_init__(self) -> None:
        _check_dof(self.dof)
        _check_scale(self.scale)
        if self.support.intervals and self.support.intervals[0][0] < 0:
            object.__setattr__(self, "support", self.support.clip(0.0, INF))

    def _u(self, value: float) -> float:
        return (value / self.scale) ** 2 / 2.0

    def log_mass(self, lo: float, hi: float) -> float:
        """log P(lo <= scale * chi_dof <= hi), evaluated on the better-conditioned tail."""
        lo = max(lo, 0.0)
        if hi <= lo:
            return -INF
        a = self.dof / 2.0
        u_lo, u_hi = self._u(lo), self._u(hi)
        if u_lo >= a:
            upper_lo = log_gamma_q(a, u_lo)
            upper_hi = log_gamma_q(a, u_hi) if math.isfinite(hi) else -INF
            return _log_diff(upper_lo, upper_hi)
        lower_hi = log_gamma_p(a, u_hi) if math.isfinite(hi) else 0.0
        lower_lo = log_gamma_p(a, u_lo)
        return _log_diff(lower_hi, lower_lo)

    def log_masses(self, support: IntervalSet | None = None) -> list[float]:
        region = self.support if support is None else support
        return [self.log_mass(lo, hi) for lo, hi in region.intervals]


def _log_diff(big: float, small: float) -> float:
    """log(exp(big) - exp(small)) for big >= small."""
    if small == -INF:
        return big
    if small >= big:
        return -INF
    return big + math.log1p(-math.exp(small - big))


def _sum_masses(log_masses: list[float]) -> tuple[float, float]:
    """Total mass both linearly (fsum, may be 0) and in log space."""
    finite = [m for m in log_masses if m > -INF]
    if not finite:
        return 0.0, -INF
    log_total = float(special.logsumexp(finite))
    return math.fsum(math.exp(m) for m in finite), log_total


def truncated_log_survival(c: float, dist: TruncatedChi) -> float:
    """log P(X >= c) for X ~ ``dist``."""
    _, log_den = _sum_masses(dist.log_masses())
    if log_den == -INF:
        raise DegenerateSupportError(f"support {dist.support} carries no probability mass")
    tail = dist.support.clip(max(float(c), 0.0), INF)
    _, log_num = _sum_masses(dist.log_masses(tail))
    return min(0.0, log_num - log_den)


def truncated_survival(c: float, dist: TruncatedChi) -> float:
    """
    P(X >= c) for X ~ ``dist``.

    Interval masses are summed with compensated summation; when any mass
    falls below the linear floor the ratio is formed in log space instead.
    """
    masses = dist.log_masses()
    den, log_den = _sum_masses(masses)
    if log_den == -INF:
        raise DegenerateSupportError(f"support {dist.support} carries no probability mass")
    tail = dist.support.clip(max(float(c), 0.0), INF)
    tail_masses = dist.log_masses(tail)
    num, log_num = _sum_masses(tail_masses)
    if min(masses + tail_masses, default=0.0) < _LOG_LINEAR_FLOOR or den < LINEAR_FLOOR:
        p = math.exp(log_num - log_den) if log_num > -INF else 0.0
    else:
        p = num / den
    return min(1.0, max(0.0, p))


@dataclass(frozen=True, slots=True)
class SelectiveTestResult:
    """Outcome of one selective test of equal means for a cluster pair."""

    p_value: float
    log_p_value: float
    stat: float
    scale: float
    sigma: float | None
    sigma_source: SigmaSource
    truncation: IntervalSet
    pair: tuple[int, int]
    dof: int
    p_naive: float | None = None
    trace_meta: dict[str, Any] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "pair": list(self.pair),
            "p_value": self.p_value,
            "log_p_value": self.log_p_value,
            "p_naive": self.p_naive,
            "stat": self.stat,
            "scale": self.scale,
            "sigma": self.sigma,
            "sigma_source": self.sigma_source.value,
            "dof": self.dof,
            "truncation": self.truncation.to_json(),
            "trace": self.trace_meta,
        }

    def csv_row(self) -> dict[str, Any]:
        """Flat record for tabular output."""
        meta = self.trace_meta or {}
        return {
            "k1": self.pair[0],
            "k2": self.pair[1],
            "p_value": self.p_value,
            "log_p_value": self.log_p_value,
            "p_naive": self.p_naive,
            "stat": self.stat,
            "scale": self.scale,
            "sigma": self.sigma,
            "sigma_source": self.sigma_source.value,
            "K": meta.get("K"),
            "T": meta.get("T"),
            "seed": meta.get("seed"),
            "converged": meta.get("converged"),
            "truncation": str(self.truncation),
        }


def _trace_meta(trace: ClusterTrace) -> dict[str, Any]:
    return {"K": trace.K, "T": trace.T, "seed": trace.seed, "converged": trace.converged}


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not (math.isfinite(sigma) and sigma > 0):
        raise InvalidArgumentError(f"sigma must be positive and finite, got {sigma}")
    return sigma


def selective_from_support(
    ctx: ContrastContext,
    support: IntervalSet,
    sigma: float,
    trace: ClusterTrace | None = None,
    sigma_source: SigmaSource = SigmaSource.KNOWN,
) -> SelectiveTestResult:
    """p-value for a given truncation set, so one S_T can serve several sigmas."""
    sigma = _check_sigma(sigma)
    q = ctx.x.q
    dist = TruncatedChi(q, sigma * ctx.nu_norm, support)
    return SelectiveTestResult(
        p_value=truncated_survival(ctx.stat, dist),
        log_p_value=truncated_log_survival(ctx.stat, dist),
        stat=ctx.stat,
        scale=dist.scale,
        sigma=sigma,
        sigma_source=sigma_source,
        truncation=support,
        pair=ctx.pair,
        dof=q,
        p_naive=chi_survival(ctx.stat, q, dist.scale),
        trace_meta=_trace_meta(trace) if trace is not None else None,
    )


def p_selective(
    x: DataMatrix,
    trace: ClusterTrace,
    k1: int,
    k2: int,
    sigma: float,
) -> SelectiveTestResult:
    """Selective p-value with known isotropic noise scale sigma."""
    sigma = _check_sigma(sigma)
    ctx = contrast_context(x, trace.final_labels, k1, k2)
    support = truncation_set(trace, ctx)
    result = selective_from_support(ctx, support, sigma, trace, SigmaSource.KNOWN)
    logger.debug("p_selective", pair=ctx.pair, p_value=result.p_value, stat=ctx.stat)
    return result


def p_selective_estimated(
    x: DataMatrix,
    trace: ClusterTrace,
    k1: int,
    k2: int,
    sigma_hat: float,
    sigma_source: SigmaSource = SigmaSource.USER,
) -> SelectiveTestResult:
    """Selective p-value with a plug-in noise scale."""
    sigma_hat = _check_sigma(sigma_hat)
    ctx = contrast_context(x, trace.final_labels, k1, k2)
    support = truncation_set(trace, ctx)
    return selective_from_support(ctx, support, sigma_hat, trace, sigma_source)


def p_sigma_selective(
    x: DataMatrix,
    trace: ClusterTrace,
    k1: int,
    k2: int,
    sigma_inv_sqrt: ArrayLike,
    sigma_sqrt: ArrayLike,
) -> SelectiveTestResult:
    """
    Selective p-value under known feature covariance Sigma.

    The statistic is ||Sigma^{-1/2} x^T nu||, chi_q with scale ||nu|| under the null.
    """
    ctx = contrast_context(x, trace.final_labels, k1, k2)
    support = truncation_set_sigma(trace, ctx, sigma_inv_sqrt, sigma_sqrt)
    stat = ctx.whitened_stat(sigma_inv_sqrt)
    q = ctx.x.q
    dist = TruncatedChi(q, ctx.nu_norm, support)
    return SelectiveTestResult(
        p_value=truncated_survival(stat, dist),
        log_p_value=truncated_log_survival(stat, dist),
        stat=stat,
        scale=dist.scale,
        sigma=None,
        sigma_source=SigmaSource.KNOWN,
        truncation=support,
        pair=ctx.pair,
        dof=q,
        p_naive=chi_survival(stat, q, dist.scale),
        trace_meta=_trace_meta(trace),
    )


def p_naive(ctx: ContrastContext, q: int, sigma: float) -> float:
    """Wald-type p-value that ignores the clustering: P(sigma ||nu|| chi_q >= stat)."""
    return chi_survival(ctx.stat, q, _check_sigma(sigma) * ctx.nu_norm)


def cluster_pairs(K: int) -> list[tuple[int, int]]:
    """All unordered label pairs (k1 < k2)."""
    return [(k1, k2) for k1 in range(1, K + 1) for k2 in range(k1 + 1, K + 1)]


def p_selective_all_pairs(
    x: DataMatrix,
    trace: ClusterTrace,
    sigma: float,
    sigma_source: SigmaSource = SigmaSource.KNOWN,
) -> list[SelectiveTestResult]:
    """Selective p-values for every pair of final clusters."""
    sigma = _check_sigma(sigma)
    results = []
    for k1, k2 in cluster_pairs(trace.K):
        ctx = contrast_context(x, trace.final_labels, k1, k2)
        results.append(
            selective_from_support(ctx, truncation_set(trace, ctx), sigma, trace, sigma_source)
        )
    return results


def rejection_rate(p_values: ArrayLike, alpha: float) -> float:
    """Fraction of finite p-values at or below ``alpha``."""
    arr = np.asarray(p_values, dtype=np.float64)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return math.nan
    return float(np.mean(arr <= alpha))
