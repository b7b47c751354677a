"""
Simulation experiment configuration and report schemas.
"""
from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import ConfigDict, Field, field_validator, model_validator

from kmeans_selective.core.config import settings
from kmeans_selective.schemas.base import BaseSchema

TYPE1_SCHEMA = "kmsel.type1/v1"
POWER_SCHEMA = "kmsel.power/v1"


class MeanModel(str, Enum):
    """Mean structures the simulator can generate."""

    GLOBAL_NULL = "global_null"
    SPIKE = "spike"
    ORTHO_THETA = "ortho_theta"
    THREE_CLUSTERS = "three_clusters"


class PValueMethod(str, Enum):
    """p-values computed for each replicate."""

    SELECTIVE_KNOWN = "selective_known"
    SELECTIVE_MED = "selective_med"
    SELECTIVE_MED_UNCENTERED = "selective_med_uncentered"
    SELECTIVE_SAMPLE = "selective_sample"
    SIGMA_DIRECT = "sigma_direct"
    NAIVE = "naive"


class PairPolicy(str, Enum):
    """Which estimated cluster pairs a replicate tests."""

    RANDOM = "random"
    ALL_PAIRS = "all_pairs"


# ============================================================================
# Configuration
# ============================================================================


class ExperimentConfig(BaseSchema):
    """A Monte Carlo experiment, as read from TOML and/or CLI flags."""

    model_config = ConfigDict(
        populate_by_name=True,
        use_enum_values=False,
        extra="forbid",
        frozen=True,
    )

    model: MeanModel
    n: int = Field(ge=2)
    q: int = Field(ge=1)
    K: int = Field(ge=2)
    T_max: int = Field(default_factory=lambda: settings.max_iter, ge=1)
    sigma: float = Field(gt=0)
    delta: float = Field(default=0.0, ge=0)
    deltas: list[float] | None = None
    qs: list[int] | None = None
    replicates: int = Field(ge=1)
    alpha: float = Field(default=0.05, gt=0, lt=1)
    seed: int = Field(ge=0, le=2**64 - 1)
    p_value_methods: list[PValueMethod] = Field(
        default_factory=lambda: [PValueMethod.SELECTIVE_KNOWN], min_length=1
    )
    pair_policy: PairPolicy = PairPolicy.RANDOM
    max_reseeds: int = Field(default_factory=lambda: settings.max_reseeds, ge=1)
    # q x q CSV; noise becomes MN(0, I, Sigma) and sigma_direct tests against it
    covariance: Path | None = None
    ridge: float = Field(default=0.0, ge=0)

    @model_validator(mode="before")
    @classmethod
    def accept_single_method(cls, data: Any) -> Any:
        """Allow ``p_value_method = "..."`` as shorthand for a one-element list."""
        if isinstance(data, dict) and "p_value_method" in data:
            data = dict(data)
            single = data.pop("p_value_method")
            if "p_value_methods" in data:
                raise ValueError("give either p_value_method or p_value_methods, not both")
            data["p_value_methods"] = [single]
        return data

    @field_validator("p_value_methods")
    @classmethod
    def dedupe_methods(cls, v: list[PValueMethod]) -> list[PValueMethod]:
        return list(dict.fromkeys(v))

    @field_validator("deltas")
    @classmethod
    def validate_deltas(cls, v: list[float] | None) -> list[float] | None:
        if v is not None and (not v or any(d < 0 for d in v)):
            raise ValueError("deltas must be a non-empty list of non-negative numbers")
        return v

    @field_validator("qs")
    @classmethod
    def validate_qs(cls, v: list[int] | None) -> list[int] | None:
        if v is not None and (not v or any(q < 1 for q in v)):
            raise ValueError("qs must be a non-empty list of positive integers")
        return v

    @model_validator(mode="after")
    def validate_model_shape(self) -> "ExperimentConfig":
        if self.K > self.n:
            raise ValueError(f"K={self.K} exceeds n={self.n}")
        for q in self.qs or [self.q]:
            check_model_dimensions(self.model, self.n, q)
        if self.covariance is not None and self.qs and set(self.qs) != {self.q}:
            raise ValueError("a covariance file fixes q; drop the qs sweep")
        return self

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        """Copy with fields replaced, re-running validation."""
        data = self.model_dump()
        data.update(changes)
        return ExperimentConfig.model_validate(data)


def check_model_dimensions(model: MeanModel, n: int, q: int) -> None:
    """Raise ValueError when (n, q) cannot carry the requested mean model."""
    if model in (MeanModel.SPIKE, MeanModel.ORTHO_THETA, MeanModel.THREE_CLUSTERS) and n % 3:
        raise ValueError(f"model {model.value} needs n divisible by 3, got n={n}")
    if model == MeanModel.SPIKE and q < 2:
        raise ValueError(f"model spike needs q >= 2, got q={q}")
    if model == MeanModel.ORTHO_THETA and (q % 10 or q < 30):
        raise ValueError(f"model ortho_theta needs q divisible by 10 and q >= 30, got q={q}")
    if model == MeanModel.THREE_CLUSTERS and q != 2:
        raise ValueError(f"model three_clusters is two-dimensional, got q={q}")


# ============================================================================
# Reports
# ============================================================================


class Diagnostics(BaseSchema):
    """Run health counters."""

    replicates: int
    reseeds: int
    reseeded_replicates: int
    converged: int
    mean_iterations: float
    degenerate_sigma: int = 0
    degenerate_contrast: int = 0
    numerical_failures: int = 0


class MethodSummary(BaseSchema):
    """Null calibration of one p-value method."""

    method: str
    tests: int
    rejection_rate: float | None
    mean_p: float | None
    ks_statistic: float | None
    ks_pvalue: float | None
    ks_critical_1pct: float | None


class Type1Report(BaseSchema):
    """Result of a null (Type I error) experiment."""

    schema_version: str = Field(default=TYPE1_SCHEMA, alias="schema")
    config: ExperimentConfig
    q: int
    alpha: float
    methods: list[MethodSummary]
    diagnostics: Diagnostics


class ConditionalPower(BaseSchema):
    """Power of one method among replicates that recovered the true clusters."""

    method: str
    power: float | None
    standard_error: float | None
    defined: bool


class PowerReport(BaseSchema):
    """Result of a power experiment at one effect size."""

    schema_version: str = Field(default=POWER_SCHEMA, alias="schema")
    config: ExperimentConfig
    delta: float
    alpha: float
    replicates: int
    accepted: int
    detection_probability: float
    detection_standard_error: float
    methods: list[ConditionalPower]
    diagnostics: Diagnostics
