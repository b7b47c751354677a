"""
kmeans-selective - Selective inference after k-means clustering

p-values for a difference in cluster means that stay valid when the
clusters themselves were estimated from the same data by Lloyd's algorithm.
"""
__version__ = "0.1.0"

from kmeans_selective.contrast import ContrastContext, contrast_context, contrast_vector
from kmeans_selective.core.errors import (
    ConfigError,
    DataError,
    DegenerateContrastError,
    DegenerateSupportError,
    EmptyClusterError,
    InvalidArgumentError,
    KMeansSelectiveError,
    NotPositiveDefiniteError,
    NumericalConsistencyError,
)
from kmeans_selective.covariance import CovarianceFactors, factorize, whiten
from kmeans_selective.inference import (
    SelectiveTestResult,
    SigmaSource,
    TruncatedChi,
    chi_survival,
    p_naive,
    p_selective,
    p_selective_all_pairs,
    p_selective_estimated,
    p_sigma_selective,
    truncated_survival,
)
from kmeans_selective.intervals import IntervalSet, Quadratic, intersect_all, solve_quadratic_leq
from kmeans_selective.kmeans_trace import (
    ClusterTrace,
    DataMatrix,
    assign_step,
    lloyd,
    objective,
    sample_initial_centroids,
    update_centroids,
)
from kmeans_selective.truncation import (
    oracle_membership,
    truncation_set,
    truncation_set_sigma,
)
from kmeans_selective.variance import (
    SigmaEstimate,
    SigmaMethod,
    bias_sample,
    estimate_sigma,
    sigma_med,
    sigma_med_uncentered,
    sigma_sample,
)

__all__ = [
    "__version__",
    "ClusterTrace",
    "ConfigError",
    "ContrastContext",
    "CovarianceFactors",
    "DataError",
    "DataMatrix",
    "DegenerateContrastError",
    "DegenerateSupportError",
    "EmptyClusterError",
    "IntervalSet",
    "InvalidArgumentError",
    "KMeansSelectiveError",
    "NotPositiveDefiniteError",
    "NumericalConsistencyError",
    "Quadratic",
    "SelectiveTestResult",
    "SigmaEstimate",
    "SigmaMethod",
    "SigmaSource",
    "TruncatedChi",
    "assign_step",
    "bias_sample",
    "chi_survival",
    "contrast_context",
    "contrast_vector",
    "estimate_sigma",
    "factorize",
    "intersect_all",
    "lloyd",
    "objective",
    "oracle_membership",
    "p_naive",
    "p_selective",
    "p_selective_all_pairs",
    "p_selective_estimated",
    "p_sigma_selective",
    "sample_initial_centroids",
    "sigma_med",
    "sigma_med_uncentered",
    "sigma_sample",
    "solve_quadratic_leq",
    "truncated_survival",
    "truncation_set",
    "truncation_set_sigma",
    "update_centroids",
    "whiten",
]
