"""
Writers for simulation artifacts: pvalues.csv, qq.csv, report.json, manifest.json.

Reports are deterministic for a fixed configuration; the manifest, which
carries the wall-clock timestamp, is written alongside them.
"""
from __future__ import annotations

import json
from collections.abc import Sequence
from pathlib import Path

import pandas as pd

from kmeans_selective.core.logging import get_logger
from kmeans_selective.io import FLOAT_FORMAT
from kmeans_selective.schemas.base import BaseSchema
from kmeans_selective.schemas.results import RunManifest
from kmeans_selective.simulation.calibration import qq_points
from kmeans_selective.simulation.experiments import ReplicateRecord

logger = get_logger(__name__)

SWEEP_SCHEMA = "kmsel.sweep/v1"

PVALUE_COLUMNS = [
    "replicate",
    "q",
    "delta",
    "k1",
    "k2",
    "method",
    "p_value",
    "stat",
    "effect",
    "recovered",
    "T",
    "converged",
    "reseeds",
    "data_seed",
    "lloyd_seed",
]


def records_frame(records: Sequence[ReplicateRecord]) -> pd.DataFrame:
    """Long-format table: one row per (replicate, pair, method)."""
    rows = [row for record in records for row in record.to_rows()]
    return pd.DataFrame(rows, columns=PVALUE_COLUMNS)


def qq_frame(records: Sequence[ReplicateRecord]) -> pd.DataFrame:
    """Uniform QQ coordinates per (q, delta, method)."""
    frame = records_frame(records)
    parts = []
    for (q, delta, method), group in frame.groupby(["q", "delta", "method"], sort=True):
        expected, observed = qq_points(group["p_value"].to_numpy())
        parts.append(
            pd.DataFrame(
                {
                    "q": q,
                    "delta": delta,
                    "method": method,
                    "rank": range(1, len(observed) + 1),
                    "uniform_quantile": expected,
                    "p_value": observed,
                }
            )
        )
    if not parts:
        return pd.DataFrame(
            columns=["q", "delta", "method", "rank", "uniform_quantile", "p_value"]
        )
    return pd.concat(parts, ignore_index=True)


def write_pvalues_csv(path: Path, records: Sequence[ReplicateRecord]) -> Path:
    records_frame(records).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_qq_csv(path: Path, records: Sequence[ReplicateRecord]) -> Path:
    qq_frame(records).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def report_json(reports: Sequence[BaseSchema]) -> str:
    """A single report as-is; several (a sweep) wrapped in one document."""
    if len(reports) == 1:
        return reports[0].to_json()
    payload = {
        "schema": SWEEP_SCHEMA,
        "reports": [r.model_dump(mode="json", by_alias=True) for r in reports],
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def write_outputs(
    output_dir: Path,
    reports: Sequence[BaseSchema],
    records: Sequence[ReplicateRecord],
    manifest: RunManifest,
) -> dict[str, Path]:
    """Write every artifact of one simulate run into ``output_dir``."""
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "pvalues": write_pvalues_csv(output_dir / "pvalues.csv", records),
        "qq": write_qq_csv(output_dir / "qq.csv", records),
        "report": output_dir / "report.json",
        "manifest": output_dir / "manifest.json",
    }
    paths["report"].write_text(report_json(reports) + "\n", encoding="utf-8")
    paths["manifest"].write_text(manifest.to_json() + "\n", encoding="utf-8")
    logger.info("outputs_written", output_dir=str(output_dir), records=len(records))
    return paths
