"""
JSON documents emitted by the ``test`` and ``estimate-sigma`` commands.
"""
from typing import Any

from pydantic import Field

from kmeans_selective.schemas.base import BaseSchema

TEST_SCHEMA = "kmsel.test/v1"
SIGMA_SCHEMA = "kmsel.sigma/v1"
MANIFEST_SCHEMA = "kmsel.manifest/v1"


class RunManifest(BaseSchema):
    """Everything needed to reproduce a run."""

    schema_version: str = Field(default=MANIFEST_SCHEMA, alias="schema")
    command: str
    flags: dict[str, Any]
    version: str
    seeds: dict[str, int] = Field(default_factory=dict)
    input_digests: dict[str, str] = Field(default_factory=dict)
    timestamp: str


class PairResult(BaseSchema):
    """One selective test in a ``test`` document."""

    pair: list[int]
    p_value: float
    log_p_value: float
    p_naive: float | None
    stat: float
    scale: float
    sigma: float | None
    sigma_source: str
    dof: int
    truncation: list[list[float | str]]


class TraceSummary(BaseSchema):
    """Shape of the clustering run behind the tests."""

    K: int
    T: int
    T_max: int
    seed: int
    converged: bool
    initial_indices: list[int]
    final_labels: list[int]
    final_sizes: list[int]


class ClusterTestReport(BaseSchema):
    """Output of ``kmsel test``."""

    schema_version: str = Field(default=TEST_SCHEMA, alias="schema")
    manifest: RunManifest
    n: int
    q: int
    whitened: bool = False
    sigma_estimate: dict[str, Any] | None = None
    covariance: dict[str, Any] | None = None
    trace: TraceSummary
    results: list[PairResult]


class SigmaReport(BaseSchema):
    """Output of ``kmsel estimate-sigma``."""

    schema_version: str = Field(default=SIGMA_SCHEMA, alias="schema")
    manifest: RunManifest
    value: float
    method: str
    n: int
    q: int
    degenerate: bool
