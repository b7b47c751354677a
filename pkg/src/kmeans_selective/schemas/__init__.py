"""Pydantic schemas for configuration files and JSON documents."""
from kmeans_selective.schemas.base import BaseSchema, ErrorResponse
from kmeans_selective.schemas.experiment import (
    ConditionalPower,
    Diagnostics,
    ExperimentConfig,
    MeanModel,
    MethodSummary,
    PairPolicy,
    PowerReport,
    PValueMethod,
    Type1Report,
)
from kmeans_selective.schemas.results import (
    PairResult,
    RunManifest,
    SigmaReport,
    ClusterTestReport,
)

__all__ = [
    "BaseSchema",
    "ConditionalPower",
    "Diagnostics",
    "ErrorResponse",
    "ExperimentConfig",
    "MeanModel",
    "MethodSummary",
    "PValueMethod",
    "PairPolicy",
    "PairResult",
    "PowerReport",
    "RunManifest",
    "SigmaReport",
    "ClusterTestReport",
    "Type1Report",
]
