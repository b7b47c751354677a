"""
Pytest fixtures and configuration.
"""
from collections.abc import Iterator

import numpy as np
import pytest

from kmeans_selective.core.logging import clear_context, setup_logging
from kmeans_selective.kmeans_trace import ClusterTrace, DataMatrix, make_generator
from kmeans_selective.simulation.models import true_partition
from tests.helpers import BLOB_CENTERS, fit_partition


@pytest.fixture(autouse=True)
def quiet_logging() -> Iterator[None]:
    """Keep structlog at WARNING and drop any bound context between tests."""
    setup_logging(level="WARNING", log_format="console")
    yield
    clear_context()


@pytest.fixture
def rng() -> np.random.Generator:
    return make_generator(20240601)


@pytest.fixture
def blob_data() -> DataMatrix:
    """Three tight blobs at (0,0), (10,0), (0,10); ten rows each, sigma 0.1."""
    noise = make_generator(7).standard_normal((30, 2))
    return DataMatrix(np.repeat(BLOB_CENTERS, 10, axis=0) + 0.1 * noise)


@pytest.fixture
def blob_truth() -> np.ndarray:
    return true_partition(30)


@pytest.fixture
def blob_trace(blob_data: DataMatrix, blob_truth: np.ndarray) -> ClusterTrace:
    return fit_partition(blob_data, 3, blob_truth)
