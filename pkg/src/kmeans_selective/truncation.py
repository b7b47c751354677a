"""
Truncation set S_T = {phi >= 0 : Lloyd on x'(phi) retraces every recorded assignment}.

Each recorded assignment decision is a set of inequalities
||x'_i(phi) - m_chosen(phi)||^2 <= ||x'_i(phi) - m_k(phi)||^2, and each side is
a quadratic in phi. S_T is the intersection of their solution sets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from kmeans_selective.contrast import (
    ContrastContext,
    check_factors,
    contrast_vector,
    perturbed_values,
    perturbed_values_sigma,
)
from kmeans_selective.core.config import settings
from kmeans_selective.core.errors import (
    DimensionError,
    EmptyClusterError,
    InvalidArgumentError,
    NumericalConsistencyError,
)
from kmeans_selective.core.logging import get_logger
from kmeans_selective.intervals import (
    INF,
    IntervalSet,
    Quadratic,
    QuadraticSystem,
    intersect_all,
    solve_quadratic_leq,
)
from kmeans_selective.kmeans_trace import (
    ClusterTrace,
    FloatArray,
    assign_step,
    membership_weights,
    update_centroids,
)

logger = get_logger(__name__)

__all__ = [
    "IntervalSet",
    "IterationWeights",
    "Quadratic",
    "QuadraticSystem",
    "build_inequalities",
    "coeffs_centroid",
    "coeffs_centroid_sigma",
    "coeffs_pairwise",
    "coeffs_pairwise_sigma",
    "intersect_all",
    "oracle_membership",
    "oracle_membership_sigma",
    "solve_quadratic_leq",
    "truncation_set",
    "truncation_set_sigma",
]


@dataclass(frozen=True, slots=True)
class IterationWeights:
    """
    Averaging weights of every cluster at every recorded step.

    ``weights[t, k-1]`` is the length-n vector with
    ``m_k^(t)(x) = x.T @ weights[t, k-1]``.
    """

    weights: FloatArray

    @classmethod
    def from_trace(cls, trace: ClusterTrace) -> IterationWeights:
        stacked = np.stack([membership_weights(labels, trace.K) for labels in trace.assignments])
        stacked.setflags(write=False)
        return cls(stacked)

    def __call__(self, t: int, k: int) -> FloatArray:
        return self.weights[t, k - 1]


def iteration_weights(trace: ClusterTrace, t: int, k: int) -> FloatArray:
    """w_k^(t)_i = 1{c_i^(t) = k} / |{i' : c_i'^(t) = k}|."""
    if not 0 <= t <= trace.T:
        raise InvalidArgumentError(f"t must be in 0..{trace.T}, got {t}")
    if not 1 <= k <= trace.K:
        raise InvalidArgumentError(f"k must be in 1..{trace.K}, got {k}")
    return membership_weights(trace.assignments[t], trace.K)[k - 1]


def _distance_coefficients(
    ctx: ContrastContext,
    centers: FloatArray,
    center_nu: FloatArray,
    ratio: float = 1.0,
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """
    Coefficients of ||x'_i(phi) - center_k(phi)||^2 for every row i and center k.

    A center is any fixed linear combination of rows, given by its value at
    x (``centers``) and its inner product with nu (``center_nu``). With
    alpha = (nu_i - center_nu_k) / ||nu||^2 and e = x_i - center_k the distance is
    alpha^2 phi^2 + 2 (alpha <e, d> - alpha^2 s) phi + ||e - alpha x^T nu||^2.
    ``ratio`` rescales phi for the covariance-aware path.
    """
    x = ctx.x.values
    n = x.shape[0]
    n_centers = centers.shape[0]
    alpha = (ctx.nu[:, None] - center_nu[None, :]) / ctx.nu_norm_sq
    e_dot_d = (x @ ctx.direction)[:, None] - (centers @ ctx.direction)[None, :]
    gamma = np.empty((n, n_centers), dtype=np.float64)
    for k in range(n_centers):
        resid = x - centers[k] - alpha[:, k, None] * ctx.mean_diff[None, :]
        gamma[:, k] = np.einsum("ij,ij->i", resid, resid)
    a = alpha * alpha
    b = 2.0 * (alpha * e_dot_d - a * ctx.stat)
    return a * ratio * ratio, b * ratio, gamma


def coeffs_pairwise(ctx: ContrastContext, i: int, j: int) -> tuple[float, float, float]:
    """Coefficients (a, b, gamma) of ||x'_i(phi) - x'_j(phi)||^2."""
    a, b, g = _distance_coefficients(
        ctx, ctx.x.values[[j]], ctx.nu[[j]]
    )
    return float(a[i, 0]), float(b[i, 0]), float(g[i, 0])


def coeffs_centroid(ctx: ContrastContext, i: int, w: ArrayLike) -> tuple[float, float, float]:
    """Coefficients of ||x'_i(phi) - x'(phi)^T w||^2 for a weight vector w."""
    weights = np.asarray(w, dtype=np.float64)
    if weights.shape != (ctx.x.n,):
        raise DimensionError("weight vector must have length n")
    a, b, g = _distance_coefficients(
        ctx, (weights @ ctx.x.values)[None, :], np.array([weights @ ctx.nu])
    )
    return float(a[i, 0]), float(b[i, 0]), float(g[i, 0])


def coeffs_pairwise_sigma(
    ctx: ContrastContext, i: int, j: int, ratio: float
) -> tuple[float, float, float]:
    """Pairwise coefficients on the covariance-aware path: (r^2 a, r b, gamma)."""
    a, b, g = coeffs_pairwise(ctx, i, j)
    return ratio * ratio * a, ratio * b, g


def coeffs_centroid_sigma(
    ctx: ContrastContext, i: int, w: ArrayLike, ratio: float
) -> tuple[float, float, float]:
    """Centroid coefficients on the covariance-aware path."""
    a, b, g = coeffs_centroid(ctx, i, w)
    return ratio * ratio * a, ratio * b, g


def _stage_system(
    ctx: ContrastContext,
    chosen: np.ndarray,
    centers: FloatArray,
    center_nu: FloatArray,
    ratio: float,
) -> QuadraticSystem:
    """dist(i, chosen_i) - dist(i, k) <= 0 for all i and every k != chosen_i."""
    a, b, g = _distance_coefficients(ctx, centers, center_nu, ratio)
    rows = np.arange(chosen.shape[0])
    col = chosen - 1
    others = np.ones_like(a, dtype=bool)
    others[rows, col] = False
    return QuadraticSystem(
        (a[rows, col][:, None] - a)[others],
        (b[rows, col][:, None] - b)[others],
        (g[rows, col][:, None] - g)[others],
    )


def _check_pairing(trace: ClusterTrace, ctx: ContrastContext) -> None:
    if trace.n != ctx.x.n:
        raise DimensionError(f"trace has n={trace.n} but data has n={ctx.x.n}")
    expected = contrast_vector(trace.final_labels, *ctx.pair)
    if not np.array_equal(expected, ctx.nu):
        raise InvalidArgumentError("contrast was not built from the trace's final clusters")


def build_inequalities(
    trace: ClusterTrace,
    ctx: ContrastContext,
    ratio: float = 1.0,
) -> QuadraticSystem:
    """
    Every inequality a trace imposes: n (K-1) for initialization and for each update.

    Initialization compares each row against the sampled initial rows;
    update t compares it against the means of the step t-1 clusters.
    """
    _check_pairing(trace, ctx)
    ctx.require_direction()
    x = ctx.x.values
    idx = list(trace.initial_indices)
    systems = [_stage_system(ctx, trace.assignments[0], x[idx], ctx.nu[idx], ratio)]
    for t in range(1, trace.T + 1):
        weights = membership_weights(trace.assignments[t - 1], trace.K)
        systems.append(
            _stage_system(ctx, trace.assignments[t], weights @ x, weights @ ctx.nu, ratio)
        )
    return QuadraticSystem.concatenate(systems)


def _feasible(system: QuadraticSystem, observed: float) -> IntervalSet:
    scale = observed if math.isfinite(observed) and observed > 0 else 1.0
    region = system.feasible_set(domain=(0.0, INF), phi_scale=scale)
    tol = settings.membership_rtol * max(1.0, observed)
    if not region.contains(observed, tol=tol):
        raise NumericalConsistencyError(
            f"observed statistic {observed:.6g} is not in the computed truncation set {region}",
            stat=observed,
        )
    return region


def truncation_set(trace: ClusterTrace, ctx: ContrastContext) -> IntervalSet:
    """
    S_T as a subset of [0, inf).

    Always contains the observed statistic, since phi = stat gives back x.
    """
    system = build_inequalities(trace, ctx)
    region = _feasible(system, ctx.stat)
    logger.debug(
        "truncation_set_built",
        inequalities=len(system),
        intervals=len(region),
        stat=ctx.stat,
        pair=ctx.pair,
    )
    return region


def truncation_set_sigma(
    trace: ClusterTrace,
    ctx: ContrastContext,
    sigma_inv_sqrt: ArrayLike,
    sigma_sqrt: ArrayLike,
) -> IntervalSet:
    """
    Truncation set for the covariance-aware path.

    Contains ||Sigma^{-1/2} x^T nu||. The path at phi equals the spherical
    path at r * phi, so coefficients scale to (r^2 a, r b, gamma).
    """
    check_factors(sigma_inv_sqrt, sigma_sqrt, ctx.x.q)
    ratio = ctx.whitening_ratio(sigma_inv_sqrt)
    system = build_inequalities(trace, ctx, ratio=ratio)
    return _feasible(system, ctx.whitened_stat(sigma_inv_sqrt))


def reproduces_trace(trace: ClusterTrace, values: FloatArray) -> bool:
    """Whether Lloyd on ``values`` from the same initial rows yields every recorded assignment."""
    labels = assign_step(values, values[list(trace.initial_indices)])
    if not np.array_equal(labels, trace.assignments[0]):
        return False
    for t in range(1, trace.T + 1):
        try:
            centroids = update_centroids(values, labels, trace.K)
        except EmptyClusterError:
            return False
        labels = assign_step(values, centroids)
        if not np.array_equal(labels, trace.assignments[t]):
            return False
    return True


def oracle_membership(trace: ClusterTrace, ctx: ContrastContext, phi: float) -> bool:
    """Brute-force check of phi in S_T by rerunning Lloyd on x'(phi)."""
    return reproduces_trace(trace, perturbed_values(ctx, phi))


def oracle_membership_sigma(
    trace: ClusterTrace,
    ctx: ContrastContext,
    phi: float,
    sigma_inv_sqrt: ArrayLike,
    sigma_sqrt: ArrayLike,
) -> bool:
    """Brute-force membership on the covariance-aware path."""
    return reproduces_trace(trace, perturbed_values_sigma(ctx, phi, sigma_inv_sqrt, sigma_sqrt))
