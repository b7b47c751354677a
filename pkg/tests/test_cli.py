"""
Tests for the kmsel command line.
"""
import json

import numpy as np
import pytest
from typer.testing import CliRunner

from kmeans_selective.cli import app
from kmeans_selective.io import write_matrix
from tests.helpers import fit

runner = CliRunner()


def invoke(*args: str):
    return runner.invoke(app, ["--log-level", "ERROR", *args])


@pytest.fixture
def blob_csv(tmp_path, blob_data):
    path = tmp_path / "blobs.csv"
    write_matrix(path, blob_data)
    return path


@pytest.fixture
def blob_seed(blob_data):
    return str(fit(blob_data, 3).seed)


class TestTestCommand:
    """kmsel test."""

    def test_all_pairs_known_sigma(self, blob_csv, blob_seed):
        """Every pair is tested with the known sigma and the manifest records seed and input."""
        result = invoke("test", str(blob_csv), "--k", "3", "--sigma", "0.1", "--seed", blob_seed)
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        assert report["schema"].startswith("kmsel.")
        assert report["n"] == 30
        assert report["q"] == 2
        assert [r["pair"] for r in report["results"]] == [[1, 2], [1, 3], [2, 3]]
        assert all(0.0 <= r["p_value"] <= 1.0 for r in report["results"])
        assert all(r["sigma_source"] == "known" for r in report["results"])
        assert report["trace"]["K"] == 3
        assert report["manifest"]["seeds"] == {"lloyd": int(blob_seed)}
        assert str(blob_csv) in report["manifest"]["input_digests"]

    def test_single_pair_and_output_file(self, blob_csv, blob_seed, tmp_path):
        """A single --pair is written to the --output file as well."""
        out = tmp_path / "result.json"
        result = invoke(
            "test", str(blob_csv), "-k", "3", "--pair", "1", "2", "--sigma", "0.1",
            "-s", blob_seed, "-o", str(out),
        )
        assert result.exit_code == 0, result.output
        report = json.loads(out.read_text(encoding="utf-8"))
        assert [r["pair"] for r in report["results"]] == [[1, 2]]
        assert report["manifest"]["flags"]["all_pairs"] is False

    def test_estimated_sigma(self, blob_csv, blob_seed):
        """Without --sigma the chosen estimator supplies the scale and is reported."""
        result = invoke(
            "test", str(blob_csv), "--k", "3", "--sigma-estimator", "sample", "--seed", blob_seed
        )
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        assert report["sigma_estimate"]["method"] == "sample"
        assert report["results"][0]["sigma_source"] == "sample"

    def test_covariance(self, blob_csv, blob_seed, tmp_path):
        """--cov switches to the covariance-aware p-value with no sigma."""
        cov = tmp_path / "cov.csv"
        write_matrix(cov, 0.01 * np.eye(2))
        result = invoke("test", str(blob_csv), "--k", "3", "--cov", str(cov), "--seed", blob_seed)
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        assert report["covariance"]["whitened"] is False
        assert all(r["sigma"] is None for r in report["results"])

    def test_whiten(self, blob_csv, blob_seed, tmp_path):
        """--whiten transforms the data and tests with sigma 1."""
        cov = tmp_path / "cov.csv"
        write_matrix(cov, 0.01 * np.eye(2))
        result = invoke(
            "test", str(blob_csv), "--k", "3", "--cov", str(cov), "--whiten", "--seed", blob_seed
        )
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        assert report["whitened"] is True
        assert all(r["sigma"] == 1.0 for r in report["results"])

    def test_pair_conflicts_with_all_pairs(self, blob_csv):
        """--pair and --all-pairs together are a usage error."""
        result = invoke("test", str(blob_csv), "--k", "3", "--pair", "1", "2", "--all-pairs", "--sigma", "1")
        assert result.exit_code == 2
        assert "--all-pairs" in result.output

    def test_sigma_conflicts_with_cov(self, blob_csv, tmp_path):
        """--sigma and --cov together are a usage error."""
        cov = tmp_path / "cov.csv"
        write_matrix(cov, np.eye(2))
        result = invoke("test", str(blob_csv), "--k", "3", "--sigma", "1", "--cov", str(cov))
        assert result.exit_code == 2

    def test_whiten_requires_cov(self, blob_csv):
        """--whiten without --cov is a usage error."""
        assert invoke("test", str(blob_csv), "--k", "3", "--whiten").exit_code == 2

    def test_label_out_of_range(self, blob_csv, blob_seed):
        """A pair label above K is a usage error."""
        result = invoke("test", str(blob_csv), "--k", "3", "--pair", "1", "4", "--sigma", "1", "--seed", blob_seed)
        assert result.exit_code == 2

    def test_bad_csv(self, tmp_path):
        """A non-numeric entry exits with the data code and a parse payload."""
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3,x\n", encoding="utf-8")
        result = invoke("test", str(path), "--k", "2", "--sigma", "1")
        assert result.exit_code == 3
        assert '"error":"parse"' in result.output.replace(" ", "")

    @pytest.mark.parametrize("estimator", ["med", "sample"])
    def test_constant_data_needs_explicit_sigma(self, tmp_path, estimator):
        """Constant rows estimate sigma as exactly zero, which is a usage error."""
        path = tmp_path / "flat.csv"
        path.write_text("0.1,0.1\n" * 6, encoding="utf-8")
        result = invoke("test", str(path), "--k", "2", "--sigma-estimator", estimator)
        assert result.exit_code == 2
        assert "--sigma" in result.output

    def test_asymmetric_covariance(self, blob_csv, tmp_path):
        """An asymmetric covariance exits with the data code."""
        cov = tmp_path / "cov.csv"
        write_matrix(cov, [[1.0, 0.5], [0.1, 1.0]])
        assert invoke("test", str(blob_csv), "--k", "3", "--cov", str(cov)).exit_code == 3


class TestEstimateSigmaCommand:
    """kmsel estimate-sigma."""

    def test_report(self, blob_csv):
        """The estimate is printed as JSON with its shape and degeneracy flag."""
        result = invoke("estimate-sigma", str(blob_csv), "--method", "sample")
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        assert report["method"] == "sample"
        assert report["value"] > 0.0
        assert (report["n"], report["q"]) == (30, 2)
        assert report["degenerate"] is False

    def test_missing_file(self, tmp_path):
        """A missing data file exits with the data code."""
        assert invoke("estimate-sigma", str(tmp_path / "absent.csv")).exit_code == 3


class TestSimulateCommand:
    """kmsel simulate."""

    def test_type1_writes_outputs(self, tmp_path):
        """A Type I run writes all four artifacts and a summary table."""
        out = tmp_path / "run"
        result = invoke(
            "simulate", "type1", "--model", "global_null", "--n", "20", "--q", "2", "--k", "2",
            "--sigma", "1", "--replicates", "4", "--seed", "1", "--threads", "1",
            "--method", "selective_known", "--method", "naive", "--output-dir", str(out),
        )
        assert result.exit_code == 0, result.output
        for name in ("pvalues.csv", "qq.csv", "report.json", "manifest.json"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["seeds"] == {"base": 1}
        assert "Type I error" in result.output

    def test_power_with_covariance(self, tmp_path):
        """--cov generates correlated noise and the covariance file is digested."""
        cov = tmp_path / "cov.csv"
        write_matrix(cov, [[1.0, 0.3], [0.3, 0.5]])
        out = tmp_path / "run"
        result = invoke(
            "simulate", "power", "--model", "three_clusters", "--n", "30", "--q", "2", "--k", "3",
            "--sigma", "1", "--replicates", "3", "--seed", "2", "--threads", "1",
            "--method", "sigma_direct", "--cov", str(cov), "--ridge", "0.01",
            "--output-dir", str(out),
        )
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert str(cov) in manifest["input_digests"]
        assert manifest["flags"]["ridge"] == 0.01
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["config"]["covariance"] == str(cov)

    def test_power_rejects_global_null(self, tmp_path):
        """A power run needs true clusters."""
        result = invoke(
            "simulate", "power", "--model", "global_null", "--n", "20", "--q", "2", "--k", "2",
            "--sigma", "1", "--replicates", "2", "--seed", "1", "--output-dir", str(tmp_path),
        )
        assert result.exit_code == 2

    def test_missing_required_key(self, tmp_path):
        """A run without the required model keys is a usage error."""
        result = invoke("simulate", "type1", "--n", "20", "--output-dir", str(tmp_path))
        assert result.exit_code == 2

    def test_bad_threads(self, tmp_path):
        """Zero worker threads is a usage error."""
        result = invoke(
            "simulate", "type1", "--model", "global_null", "--n", "20", "--q", "2", "--k", "2",
            "--sigma", "1", "--replicates", "2", "--seed", "1", "--threads", "0",
            "--output-dir", str(tmp_path),
        )
        assert result.exit_code == 2


class TestInfoCommand:
    """kmsel info."""

    def test_lists_settings(self):
        """The info table shows the effective settings."""
        result = invoke("info")
        assert result.exit_code == 0
        assert "Threads" in result.output
