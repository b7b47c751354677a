"""
File input/output: numeric CSV matrices, digests, manifests and TOML experiment files.
"""
from __future__ import annotations

import hashlib
import re
import tomllib
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike
from pydantic import ValidationError

from kmeans_selective import __version__
from kmeans_selective.core.errors import ConfigError, DataParseError, DimensionError
from kmeans_selective.core.logging import get_logger
from kmeans_selective.kmeans_trace import DataMatrix, FloatArray
from kmeans_selective.schemas.experiment import ExperimentConfig
from kmeans_selective.schemas.results import RunManifest

logger = get_logger(__name__)

FLOAT_FORMAT = "%.17g"


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def has_header(path: Path) -> bool:
    """A first line containing any non-numeric field is a header."""
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                return not all(_is_number(tok.strip()) for tok in line.split(","))
    return False


def read_array(path: str | Path) -> FloatArray:
    """Read a comma-separated numeric matrix, with or without a header row."""
    path = Path(path)
    if not path.is_file():
        raise DataParseError(f"no such file: {path}", path=str(path))
    header = 0 if has_header(path) else None
    try:
        frame = pd.read_csv(
            path, header=header, skip_blank_lines=True, float_precision="round_trip"
        )
    except pd.errors.EmptyDataError:
        raise DataParseError(f"{path} contains no data", path=str(path)) from None
    except pd.errors.ParserError as exc:
        raise DataParseError(f"{path}: {exc}", path=str(path)) from None
    try:
        values = frame.apply(pd.to_numeric, errors="raise").to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise DataParseError(f"{path}: non-numeric entry ({exc})", path=str(path)) from None
    if values.size == 0:
        raise DataParseError(f"{path} contains no data", path=str(path))
    missing = np.argwhere(~np.isfinite(values))
    if missing.size:
        row, col = (int(v) for v in missing[0])
        raise DataParseError(
            f"{path}: missing or non-finite value at row {row + 1}, column {col + 1}",
            path=str(path),
        )
    logger.debug("csv_read", path=str(path), shape=values.shape, header=header is not None)
    return values


def read_matrix(path: str | Path) -> DataMatrix:
    """Read an n x q data matrix."""
    return DataMatrix(read_array(path))


def read_covariance(path: str | Path, q: int) -> FloatArray:
    """Read a q x q covariance matrix."""
    cov = read_array(path)
    if cov.shape != (q, q):
        raise DimensionError(f"covariance in {path} has shape {cov.shape}, expected ({q}, {q})")
    return cov


def write_matrix(path: str | Path, values: DataMatrix | ArrayLike) -> None:
    """Write a matrix as header-less CSV with round-trip float formatting."""
    arr = values.values if isinstance(values, DataMatrix) else np.asarray(values, dtype=np.float64)
    pd.DataFrame(arr).to_csv(path, header=False, index=False, float_format=FLOAT_FORMAT)


def file_sha256(path: str | Path) -> str:
    """SHA-256 of a file's bytes."""
    sha256 = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            sha256.update(chunk)
    return sha256.hexdigest()


def build_manifest(
    command: str,
    flags: dict[str, Any],
    seeds: dict[str, int] | None = None,
    inputs: list[Path] | None = None,
) -> RunManifest:
    """Record the command, flags, version, seeds and input digests of a run."""
    return RunManifest(
        command=command,
        flags={k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items()},
        version=__version__,
        seeds=seeds or {},
        input_digests={str(p): file_sha256(p) for p in inputs or []},
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


# ============================================================================
# Experiment configuration
# ============================================================================


def _key_lines(text: str) -> dict[str, int]:
    """1-based line of each top-level ``key = value`` assignment."""
    lines: dict[str, int] = {}
    pattern = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=")
    for number, line in enumerate(text.splitlines(), start=1):
        match = pattern.match(line)
        if match:
            lines.setdefault(match.group(1), number)
    return lines


def _first_error(exc: ValidationError, lines: dict[str, int]) -> ConfigError:
    err = exc.errors()[0]
    loc = err.get("loc") or ()
    key = str(loc[0]) if loc else "model"
    message = err.get("msg", "invalid value")
    if err.get("type") == "missing":
        message = "missing required key"
    elif err.get("type") == "extra_forbidden":
        message = "unknown key"
    if key == "p_value_methods" and key not in lines and "p_value_method" in lines:
        key = "p_value_method"
    return ConfigError(message, key=key, line=lines.get(key) if key else None)


def load_experiment_config(
    path: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> ExperimentConfig:
    """
    Build an ExperimentConfig from a TOML file, then apply CLI overrides.

    Errors name the offending key and, when it came from the file, its line.
    """
    data: dict[str, Any] = {}
    lines: dict[str, int] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        data = dict(data.get("experiment", data))
        if isinstance(data.get("covariance"), str):
            data["covariance"] = path.parent / data["covariance"]
        lines = _key_lines(text)
    for key, value in (overrides or {}).items():
        if value is not None:
            if key == "p_value_methods":
                data.pop("p_value_method", None)
            data[key] = value
            lines.pop(key, None)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise _first_error(exc, lines) from None
