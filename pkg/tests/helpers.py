"""Shared helpers for building clustered test instances."""
import numpy as np
import pytest

from kmeans_selective.core.errors import EmptyClusterError
from kmeans_selective.kmeans_trace import ClusterTrace, DataMatrix, lloyd, make_generator

BLOB_CENTERS = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])


def same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    """Equality of partitions up to relabeling."""
    left = np.asarray(a).tolist()
    right = np.asarray(b).tolist()
    pairs = set(zip(left, right, strict=True))
    return len(pairs) == len(set(left)) == len(set(right))


def fit(x: DataMatrix, K: int, T_max: int = 50, seeds: range = range(50)) -> ClusterTrace:
    """First Lloyd run over ``seeds`` that leaves no cluster empty."""
    for seed in seeds:
        try:
            return lloyd(x, K, T_max, seed)
        except EmptyClusterError:
            continue
    pytest.fail(f"every seed in {seeds} emptied a cluster")


def fit_partition(
    x: DataMatrix, K: int, truth: np.ndarray, seeds: range = range(200)
) -> ClusterTrace:
    """First Lloyd run whose final partition equals ``truth``."""
    for seed in seeds:
        try:
            trace = lloyd(x, K, 50, seed)
        except EmptyClusterError:
            continue
        if same_partition(trace.final_labels, truth):
            return trace
    pytest.fail("no seed recovered the reference partition")


def random_spd(q: int, seed: int) -> np.ndarray:
    """Well-conditioned random covariance."""
    a = make_generator(seed).standard_normal((q, q))
    return a @ a.T / q + 0.5 * np.eye(q)


def random_instance(seed: int, n: int, q: int, K: int) -> tuple[DataMatrix, ClusterTrace]:
    """Small Gaussian dataset with a loose cluster structure and its Lloyd trace."""
    gen = make_generator(seed)
    centers = 3.0 * gen.standard_normal((K, q))
    labels = np.arange(n) % K
    x = DataMatrix(centers[labels] + gen.standard_normal((n, q)))
    return x, fit(x, K, seeds=range(seed * 100, seed * 100 + 50))
