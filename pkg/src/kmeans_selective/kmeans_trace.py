"""
Seeded Lloyd's algorithm that records every intermediate assignment.

Cluster labels are 1-based; row indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from kmeans_selective.core.errors import (
    DataError,
    DimensionError,
    EmptyClusterError,
    InvalidArgumentError,
)
from kmeans_selective.core.logging import get_logger

logger = get_logger(__name__)

FloatArray = NDArray[np.float64]
LabelArray = NDArray[np.int64]

MAX_SEED = 2**64 - 1


@dataclass(frozen=True, slots=True)
class DataMatrix:
    """
    An n x q matrix of finite observations (rows) and features (columns).

    The stored array is a read-only float64 copy.
    """

    values: FloatArray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise DimensionError(f"data must be two-dimensional, got ndim={arr.ndim}")
        n, q = arr.shape
        if n < 2:
            raise DimensionError(f"data needs at least 2 rows, got {n}")
        if q < 1:
            raise DimensionError("data needs at least 1 column")
        if not np.all(np.isfinite(arr)):
            raise DataError("data contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def q(self) -> int:
        return int(self.values.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.n, self.q


def as_values(x: DataMatrix | ArrayLike) -> FloatArray:
    """Return the float64 2-D array behind ``x``."""
    if isinstance(x, DataMatrix):
        return x.values
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got ndim={arr.ndim}")
    return arr


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise InvalidArgumentError(f"seed must be in [0, 2^64 - 1], got {seed}")
    return seed


def make_generator(seed: int) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(_check_seed(seed)))


@dataclass(frozen=True, slots=True)
class ClusterTrace:
    """Complete record of one Lloyd run: initial rows and every assignment vector."""

    initial_indices: tuple[int, ...]
    assignments: LabelArray
    converged: bool
    K: int
    seed: int = 0
    T_max: int = 0

    def __post_init__(self) -> None:
        arr = np.array(self.assignments, dtype=np.int64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise DimensionError("assignments must have shape (T+1, n)")
        if len(self.initial_indices) != self.K:
            raise InvalidArgumentError("initial_indices must have K entries")
        if arr.min() < 1 or arr.max() > self.K:
            raise InvalidArgumentError(f"labels must lie in 1..{self.K}")
        arr.setflags(write=False)
        object.__setattr__(self, "assignments", arr)
        object.__setattr__(self, "initial_indices", tuple(int(i) for i in self.initial_indices))

    @property
    def T(self) -> int:
        """Number of assignment updates after initialization."""
        return int(self.assignments.shape[0]) - 1

    @property
    def n(self) -> int:
        return int(self.assignments.shape[1])

    @property
    def final_labels(self) -> LabelArray:
        return self.assignments[-1]

    def cluster_sizes(self, t: int = -1) -> LabelArray:
        """Membership counts of clusters 1..K at step ``t``."""
        return np.bincount(self.assignments[t] - 1, minlength=self.K).astype(np.int64)

    def to_dict(self) -> dict[str, Any]:
        return {
            "K": self.K,
            "T": self.T,
            "T_max": self.T_max,
            "seed": self.seed,
            "converged": self.converged,
            "initial_indices": list(self.initial_indices),
            "final_labels": self.final_labels.tolist(),
            "final_sizes": self.cluster_sizes().tolist(),
        }


def sample_initial_centroids(n: int, K: int, seed: int) -> tuple[int, ...]:
    """
    Draw K distinct row indices uniformly without replacement.

    Partial Fisher-Yates on a Philox stream, so the result depends only on
    ``(n, K, seed)``.
    """
    if K < 1 or K > n:
        raise InvalidArgumentError(f"need 1 <= K <= n, got K={K}, n={n}")
    rng = make_generator(seed)
    pool = np.arange(n, dtype=np.int64)
    for j in range(K):
        r = j + int(rng.integers(n - j))
        pool[j], pool[r] = pool[r], pool[j]
    return tuple(int(i) for i in pool[:K])


def assign_step(x: DataMatrix | ArrayLike, centroids: ArrayLike) -> LabelArray:
    """Label each row with its nearest centroid; ties go to the smallest label."""
    values = as_values(x)
    cents = np.asarray(centroids, dtype=np.float64)
    if cents.ndim != 2 or cents.shape[1] != values.shape[1]:
        raise DimensionError(
            f"centroids shape {cents.shape} does not match data columns {values.shape[1]}"
        )
    dist = np.empty((values.shape[0], cents.shape[0]), dtype=np.float64)
    for k in range(cents.shape[0]):
        diff = values - cents[k]
        dist[:, k] = np.einsum("ij,ij->i", diff, diff)
    # argmin returns the first minimizer
    return (np.argmin(dist, axis=1) + 1).astype(np.int64)


def membership_weights(labels: ArrayLike, K: int) -> FloatArray:
    """
    K x n matrix whose row k-1 averages the members of cluster k.

    Raises EmptyClusterError naming the first empty cluster.
    """
    lab = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(lab - 1, minlength=K)
    empty = np.flatnonzero(counts[:K] == 0)
    if empty.size:
        raise EmptyClusterError(cluster=int(empty[0]) + 1)
    weights = np.zeros((K, lab.shape[0]), dtype=np.float64)
    weights[lab - 1, np.arange(lab.shape[0])] = 1.0
    return weights / counts[:K, None]


def update_centroids(x: DataMatrix | ArrayLike, labels: ArrayLike, K: int) -> FloatArray:
    """Cluster means, one row per label 1..K."""
    values = as_values(x)
    lab = np.asarray(labels, dtype=np.int64)
    if lab.shape != (values.shape[0],):
        raise DimensionError("labels must have one entry per row")
    return membership_weights(lab, K) @ values


def lloyd(x: DataMatrix, K: int, T_max: int, seed: int) -> ClusterTrace:
    """
    Run Lloyd's algorithm, recording c^(0) .. c^(T).

    Stops after the first update that leaves the assignment unchanged
    (converged) or after ``T_max`` updates.
    """
    values = as_values(x)
    n = values.shape[0]
    if T_max < 1:
        raise InvalidArgumentError(f"T_max must be >= 1, got {T_max}")
    indices = sample_initial_centroids(n, K, seed)

    assignments = [assign_step(values, values[list(indices)])]
    converged = False
    for t in range(1, T_max + 1):
        try:
            centroids = update_centroids(values, assignments[-1], K)
        except EmptyClusterError as exc:
            raise EmptyClusterError(cluster=exc.cluster, iteration=t - 1) from None
        labels = assign_step(values, centroids)
        assignments.append(labels)
        if np.array_equal(labels, assignments[-2]):
            converged = True
            break

    last = assignments[-1]
    sizes = np.bincount(last - 1, minlength=K)
    if np.any(sizes == 0):
        raise EmptyClusterError(
            cluster=int(np.flatnonzero(sizes == 0)[0]) + 1, iteration=len(assignments) - 1
        )

    trace = ClusterTrace(
        initial_indices=indices,
        assignments=np.vstack(assignments),
        converged=converged,
        K=K,
        seed=int(seed),
        T_max=T_max,
    )
    logger.debug("lloyd_finished", K=K, T=trace.T, converged=converged, seed=seed)
    return trace


def objective(x: DataMatrix | ArrayLike, labels: ArrayLike) -> float:
    """Within-cluster sum of squared distances to cluster means."""
    values = as_values(x)
    lab = np.asarray(labels, dtype=np.int64)
    K = int(lab.max())
    centroids = update_centroids(values, lab, K)
    resid = values - centroids[lab - 1]
    return float(np.einsum("ij,ij->", resid, resid))
