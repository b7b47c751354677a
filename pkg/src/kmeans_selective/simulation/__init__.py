"""Monte Carlo experiments: data generation, replicate runners and artifact writers."""
from kmeans_selective.simulation.calibration import (
    MonteCarloEstimate,
    UniformitySummary,
    conditional_monte_carlo_p_value,
    ks_uniformity,
    qq_points,
)
from kmeans_selective.simulation.experiments import (
    PowerResult,
    ReplicateRecord,
    Type1Result,
    run_power,
    run_power_sweep,
    run_replicate,
    run_type1,
    run_type1_sweep,
)
from kmeans_selective.simulation.models import (
    gen_matrix_normal,
    gen_matrix_normal_cov,
    mean_matrix,
    mu_global_null,
    mu_ortho_theta,
    mu_spike,
    mu_three_clusters,
)

__all__ = [
    "MonteCarloEstimate",
    "PowerResult",
    "ReplicateRecord",
    "Type1Result",
    "UniformitySummary",
    "conditional_monte_carlo_p_value",
    "gen_matrix_normal",
    "gen_matrix_normal_cov",
    "ks_uniformity",
    "mean_matrix",
    "mu_global_null",
    "mu_ortho_theta",
    "mu_spike",
    "mu_three_clusters",
    "qq_points",
    "run_power",
    "run_power_sweep",
    "run_replicate",
    "run_type1",
    "run_type1_sweep",
]
