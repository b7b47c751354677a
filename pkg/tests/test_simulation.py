"""
Tests for mean models, replicate runners, calibration summaries and artifact writers.
"""
import json
import math

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from kmeans_selective.contrast import ContrastContext, contrast_context
from kmeans_selective.core.errors import (
    DegenerateContrastError,
    DimensionError,
    InvalidArgumentError,
)
from kmeans_selective.inference import p_selective
from kmeans_selective.io import build_manifest, write_matrix
from kmeans_selective.kmeans_trace import make_generator
from kmeans_selective.schemas.experiment import ExperimentConfig, MeanModel, PValueMethod
from kmeans_selective.simulation.calibration import (
    conditional_monte_carlo_p_value,
    ks_uniformity,
    qq_points,
)
from kmeans_selective.simulation.experiments import (
    SeedStream,
    covariance_factors,
    method_p_values,
    replicate_seed,
    run_power,
    run_power_sweep,
    run_replicate,
    run_replicates,
    run_type1,
    run_type1_sweep,
)
from kmeans_selective.simulation.models import (
    effect_size,
    gen_matrix_normal,
    mean_matrix,
    mu_ortho_theta,
    mu_spike,
    mu_three_clusters,
    true_pair_recovered,
    true_partition,
)
from kmeans_selective.simulation.outputs import PVALUE_COLUMNS, report_json, write_outputs
from tests.helpers import random_instance, random_spd


def null_config(**changes) -> ExperimentConfig:
    data = {
        "model": "global_null",
        "n": 30,
        "q": 2,
        "K": 3,
        "sigma": 1.0,
        "replicates": 12,
        "seed": 2024,
    }
    data.update(changes)
    return ExperimentConfig.model_validate(data)


class TestMeanModels:
    """Mean matrices of the simulation models."""

    def test_spike_blocks_equidistant(self):
        """The three spike block means are pairwise delta apart."""
        mu = mu_spike(30, 10, 6.0)
        rows = mu[[0, 10, 20]]
        for i, j in [(0, 1), (0, 2), (1, 2)]:
            assert np.linalg.norm(rows[i] - rows[j]) == pytest.approx(6.0)

    def test_ortho_theta(self):
        """Each block mean has squared norm delta / 2 in its own coordinate."""
        mu = mu_ortho_theta(9, 30, 8.0)
        assert mu[0, 0] == pytest.approx(2.0)
        assert mu[3, 1] == pytest.approx(2.0)
        assert mu[8, 2] == pytest.approx(2.0)
        assert np.count_nonzero(mu) == 9

    def test_three_clusters_layout(self):
        """The fixed two-dimensional layout has its three block means."""
        mu = mu_three_clusters()
        assert mu.shape == (30, 2)
        np.testing.assert_allclose(mu[0], [2.5, 0.0])
        np.testing.assert_allclose(mu[29], [math.sqrt(18.75), 0.0])

    def test_dimension_checks(self):
        """Models refuse shapes they cannot fill."""
        with pytest.raises(InvalidArgumentError):
            mean_matrix(MeanModel.SPIKE, 31, 10, 1.0)
        with pytest.raises(InvalidArgumentError):
            mean_matrix("ortho_theta", 30, 25, 1.0)
        with pytest.raises(InvalidArgumentError):
            mean_matrix("three_clusters", 30, 3)

    def test_recovery_and_effect(self):
        """Recovery compares clusters with the true blocks; effect is the mean gap."""
        truth = true_partition(9)
        assert true_pair_recovered([2, 2, 2, 1, 1, 1, 3, 3, 3], (1, 2), truth)
        assert not true_pair_recovered([2, 2, 1, 1, 1, 1, 3, 3, 3], (1, 2), truth)
        mu = mu_spike(9, 2, 4.0)
        nu = contrast_context(mu + 0.0, truth, 1, 3).nu
        assert effect_size(mu, nu) == pytest.approx(4.0)


class TestMatrixNormal:
    """Data generation."""

    def test_moments(self):
        """Entries have the requested mean and variance."""
        x = gen_matrix_normal(np.full((1000, 1000), 2.0), 3.0, seed=1).values
        se_mean = 3.0 / 1000
        assert abs(x.mean() - 2.0) < 3 * se_mean
        assert x.var() == pytest.approx(9.0, rel=0.01)

    def test_seeded(self):
        """The same seed gives the same matrix."""
        a = gen_matrix_normal(np.zeros((5, 2)), 1.0, seed=7)
        b = gen_matrix_normal(np.zeros((5, 2)), 1.0, seed=7)
        np.testing.assert_array_equal(a.values, b.values)


class TestSeeds:
    """Per-replicate seed derivation."""

    def test_deterministic_and_distinct(self):
        """Seeds differ by replicate, attempt and stream, and by base seed."""
        seeds = {
            replicate_seed(1, m, a, s) for m in range(5) for a in range(2) for s in SeedStream
        }
        assert len(seeds) == 5 * 2 * 3
        assert replicate_seed(1, 3, 0, SeedStream.DATA) == replicate_seed(1, 3, 0, SeedStream.DATA)
        assert replicate_seed(1, 3, 0, SeedStream.DATA) != replicate_seed(2, 3, 0, SeedStream.DATA)


class TestExperimentConfig:
    """Validation of experiment settings."""

    def test_single_method_shorthand(self):
        """A single p_value_method key becomes a one-item list."""
        config = null_config(p_value_method="naive")
        assert config.p_value_methods == [PValueMethod.NAIVE]

    def test_methods_deduplicated(self):
        """Repeated methods are dropped in order."""
        config = null_config(p_value_methods=["naive", "selective_known", "naive"])
        assert config.p_value_methods == [PValueMethod.NAIVE, PValueMethod.SELECTIVE_KNOWN]

    def test_K_above_n(self):
        """K may not exceed n."""
        with pytest.raises(ValidationError):
            null_config(n=3, K=4)

    def test_unknown_key(self):
        """Unknown keys are rejected."""
        with pytest.raises(ValidationError):
            null_config(colour="red")

    def test_with_overrides(self):
        """Overrides return a new validated config."""
        config = null_config().with_overrides(q=5, replicates=3)
        assert (config.q, config.replicates) == (5, 3)


class TestReplicates:
    """Replicate runners."""

    def test_record_contents(self):
        """A record carries the pair, every method's p-value and recovery."""
        config = null_config(p_value_methods=["selective_known", "naive", "sigma_direct"])
        records = run_replicate(config, 0)
        assert len(records) == 1
        record = records[0]
        assert record.pair in [(1, 2), (1, 3), (2, 3)]
        assert set(record.p_values) == {"selective_known", "naive", "sigma_direct"}
        for p in record.p_values.values():
            assert math.isnan(p) or 0.0 <= p <= 1.0
        if not math.isnan(record.p_values["selective_known"]):
            assert record.p_values["sigma_direct"] == pytest.approx(
                record.p_values["selective_known"], rel=1e-8, abs=1e-12
            )
        assert not record.recovered

    def test_degenerate_contrast_records_nan(self, monkeypatch):
        """A pair with coincident means yields missing p-values, not a non-rejection."""

        def coincident(self):
            raise DegenerateContrastError("identical means")

        monkeypatch.setattr(ContrastContext, "require_direction", coincident)
        config = null_config(p_value_methods=["selective_known", "naive"])
        record = run_replicate(config, 0)[0]
        assert set(record.p_values) == {"selective_known", "naive"}
        assert all(math.isnan(p) for p in record.p_values.values())
        assert method_p_values([record], "naive").size == 1

    def test_all_pairs_policy(self):
        """all_pairs tests every pair of one dataset."""
        records = run_replicate(null_config(pair_policy="all_pairs"), 1)
        assert [r.pair for r in records] == [(1, 2), (1, 3), (2, 3)]

    def test_thread_count_does_not_change_results(self):
        """Results are identical with one or four threads."""
        config = null_config(p_value_methods=["selective_known", "selective_med"])
        serial = run_replicates(config, threads=1)
        parallel = run_replicates(config, threads=4)
        assert [r.replicate for r in parallel] == list(range(config.replicates))
        for a, b in zip(serial, parallel, strict=True):
            assert a.data_seed == b.data_seed
            assert a.lloyd_seed == b.lloyd_seed
            np.testing.assert_array_equal(
                list(a.p_values.values()), list(b.p_values.values())
            )

    def test_rows(self):
        """One CSV row per method with the documented columns."""
        record = run_replicate(null_config(p_value_methods=["naive", "selective_known"]), 2)[0]
        rows = record.to_rows()
        assert [row["method"] for row in rows] == ["naive", "selective_known"]
        assert set(rows[0]) == set(PVALUE_COLUMNS)


class TestType1:
    """Null experiments."""

    def test_report(self):
        """The report lists each method's rejection rate and test count."""
        config = null_config(p_value_methods=["selective_known", "naive"], replicates=20)
        result = run_type1(config, threads=2)
        report = result.report
        assert report.q == 2
        assert [m.method for m in report.methods] == ["selective_known", "naive"]
        assert report.diagnostics.replicates == 20
        for summary in report.methods:
            assert summary.tests <= 20
            assert 0.0 <= summary.rejection_rate <= 1.0
        p = method_p_values(result.records, "selective_known")
        assert p.shape == (20,)

    def test_q_sweep(self):
        """A q sweep runs one experiment per q."""
        config = null_config(qs=[2, 4], replicates=4)
        results = run_type1_sweep(config, threads=1)
        assert [r.report.q for r in results] == [2, 4]
        assert {rec.q for rec in results[1].records} == {4}


class TestPower:
    """Power experiments."""

    def test_detection_increases_with_effect(self):
        """Detection is higher at delta 6 than at delta 0.5."""
        config = ExperimentConfig(
            model=MeanModel.SPIKE,
            n=30,
            q=10,
            K=3,
            sigma=0.5,
            deltas=[0.5, 6.0],
            replicates=30,
            seed=5,
            p_value_methods=[PValueMethod.SELECTIVE_KNOWN],
        )
        low, high = run_power_sweep(config, threads=2)
        assert low.report.delta == 0.5
        assert high.report.delta == 6.0
        assert high.report.detection_probability > low.report.detection_probability
        assert high.report.accepted > 0
        method = high.report.methods[0]
        assert method.defined
        assert 0.0 <= method.power <= 1.0

    def test_undefined_power_flagged(self):
        """With no recovered clusters, conditional power is reported as undefined."""
        config = null_config(model="spike", q=10, delta=0.0, replicates=3)
        result = run_power_sweep(config, threads=1)[0]
        if result.report.accepted == 0:
            assert not result.report.methods[0].defined
            assert result.report.methods[0].power is None

    def test_global_null_rejected(self):
        """Power is undefined without true clusters to detect."""
        with pytest.raises(InvalidArgumentError, match="global_null"):
            run_power(null_config(), threads=1)


class TestCovarianceExperiments:
    """Experiments whose noise has a known feature covariance."""

    def test_config_keys(self, tmp_path):
        """A covariance path and ridge are accepted; a q sweep alongside it is not."""
        config = null_config(covariance=tmp_path / "cov.csv", ridge=0.1)
        assert config.covariance == tmp_path / "cov.csv"
        assert config.ridge == 0.1
        assert null_config().covariance is None
        with pytest.raises(ValidationError):
            null_config(covariance=tmp_path / "cov.csv", qs=[2, 4])
        with pytest.raises(ValidationError):
            null_config(ridge=-1.0)

    def test_factors_from_file(self, tmp_path):
        """The configured file is read and factorized with the ridge."""
        path = tmp_path / "cov.csv"
        write_matrix(path, np.diag([4.0, 1.0]))
        factors = covariance_factors(null_config(covariance=path, ridge=0.5), 2)
        assert factors.ridge == 0.5
        np.testing.assert_allclose(factors.sqrt @ factors.sqrt, np.diag([4.5, 1.5]))
        assert covariance_factors(null_config(), 2) is None

    def test_wrong_shape_rejected(self, tmp_path):
        """A covariance file must be q x q."""
        path = tmp_path / "cov.csv"
        write_matrix(path, np.eye(3))
        with pytest.raises(DimensionError):
            run_replicates(null_config(covariance=path, replicates=1), threads=1)

    def test_scaled_identity_matches_spherical_run(self, tmp_path):
        """Sigma = 4 I generates the same data and p-values as sigma = 2."""
        path = tmp_path / "cov.csv"
        write_matrix(path, 4.0 * np.eye(2))
        methods = ["selective_known", "sigma_direct", "naive"]
        spherical = run_replicates(
            null_config(sigma=2.0, p_value_methods=methods, replicates=6), threads=1
        )
        correlated = run_replicates(
            null_config(sigma=2.0, p_value_methods=methods, replicates=6, covariance=path),
            threads=1,
        )
        for a, b in zip(spherical, correlated, strict=True):
            assert a.stat == pytest.approx(b.stat, rel=1e-12)
            for method in methods:
                assert b.p_values[method] == pytest.approx(
                    a.p_values[method], rel=1e-8, abs=1e-12, nan_ok=True
                )

    def test_sigma_direct_uses_configured_covariance(self, tmp_path):
        """With an anisotropic Sigma the covariance-aware p-value departs from the spherical one."""
        path = tmp_path / "cov.csv"
        write_matrix(path, np.diag([9.0, 0.25]))
        config = null_config(
            p_value_methods=["selective_known", "sigma_direct"], replicates=8, covariance=path
        )
        records = run_replicates(config, threads=2)
        direct = method_p_values(records, "sigma_direct")
        known = method_p_values(records, "selective_known")
        finite = np.isfinite(direct) & np.isfinite(known)
        assert finite.any()
        assert np.all((direct[finite] >= 0.0) & (direct[finite] <= 1.0))
        assert not np.allclose(direct[finite], known[finite])


class TestCalibration:
    """Uniformity summaries and the conditional Monte Carlo estimate."""

    def test_ks_on_uniform(self):
        """Uniform draws pass the KS check."""
        p = make_generator(3).random(500)
        summary = ks_uniformity(p)
        assert summary.tests == 500
        assert not summary.rejected_1pct

    def test_ks_rejects_skewed(self):
        """Skewed draws fail the KS check."""
        p = make_generator(3).random(500) ** 3
        assert ks_uniformity(p).rejected_1pct

    def test_ks_needs_values(self):
        """KS needs at least one finite value."""
        with pytest.raises(InvalidArgumentError):
            ks_uniformity([np.nan])

    def test_qq_points(self):
        """QQ points pair plotting positions with sorted finite p-values."""
        expected, observed = qq_points([0.9, 0.1, np.nan, 0.5])
        np.testing.assert_allclose(expected, [0.25, 0.5, 0.75])
        np.testing.assert_allclose(observed, [0.1, 0.5, 0.9])

    def test_monte_carlo_runs(self):
        """The rejection sampler returns a p-value when it accepts draws."""
        x, trace = random_instance(30, n=6, q=2, K=2)
        ctx = contrast_context(x, trace.final_labels, 1, 2)
        est = conditional_monte_carlo_p_value(trace, ctx, 1.0, draws=200, seed=1)
        assert est.draws == 200
        assert est.accepted <= 200
        if est.accepted:
            assert 0.0 <= est.p_value <= 1.0


class TestOutputs:
    """Artifact files."""

    def test_write_outputs(self, tmp_path):
        """Artifacts hold one row per method per replicate, QQ data, report and manifest."""
        config = null_config(p_value_methods=["selective_known", "naive"], replicates=5)
        result = run_type1(config, threads=1)
        manifest = build_manifest("simulate type1", {"replicates": 5}, seeds={"base": 2024})
        paths = write_outputs(tmp_path / "out", [result.report], result.records, manifest)
        frame = pd.read_csv(paths["pvalues"])
        assert list(frame.columns) == PVALUE_COLUMNS
        assert len(frame) == 10
        qq = pd.read_csv(paths["qq"])
        assert set(qq["method"]) == {"selective_known", "naive"}
        report = json.loads(paths["report"].read_text())
        assert report["schema"] == "kmsel.type1/v1"
        assert json.loads(paths["manifest"].read_text())["seeds"] == {"base": 2024}

    def test_sweep_document(self):
        """Several reports are wrapped in one sweep document."""
        results = run_type1_sweep(null_config(qs=[2, 3], replicates=2), threads=1)
        document = json.loads(report_json([r.report for r in results]))
        assert document["schema"] == "kmsel.sweep/v1"
        assert [r["q"] for r in document["reports"]] == [2, 3]


@pytest.mark.slow
class TestAcceptance:
    """Full-size calibration runs."""

    def test_selective_uniform_naive_anticonservative(self):
        """At n = 30, q = 2 the selective p-value is uniform and the naive one rejects over 20%."""
        config = null_config(
            replicates=2000,
            p_value_methods=["selective_known", "naive"],
        )
        report = run_type1(config).report
        known, naive = report.methods
        assert known.ks_statistic < known.ks_critical_1pct
        assert naive.rejection_rate > 0.20

    def test_estimated_sigma_q10(self):
        """At q = 10 the known, MED and sample p-values all pass KS at 1%."""
        config = null_config(
            q=10,
            replicates=2000,
            p_value_methods=["selective_known", "selective_med", "selective_sample"],
        )
        for summary in run_type1(config).report.methods:
            assert summary.ks_statistic < summary.ks_critical_1pct

    def test_monte_carlo_agreement(self):
        """Rejection sampling on tiny instances lands within 3 binomial standard errors."""
        checked = 0
        for seed in range(20):
            x, trace = random_instance(500 + seed, n=6, q=2, K=2)
            ctx = contrast_context(x, trace.final_labels, 1, 2)
            est = conditional_monte_carlo_p_value(trace, ctx, 1.0, draws=40_000, seed=seed)
            if est.accepted < 500:
                continue
            exact = p_selective(x, trace, 1, 2, sigma=1.0).p_value
            # binomial error under the exact p, so p near 0 or 1 is not judged by a zero estimate
            se = math.sqrt(exact * (1.0 - exact) / est.accepted)
            assert abs(exact - est.p_value) <= 3 * se
            checked += 1
        assert checked >= 15

    def test_power_curve_shape(self):
        """Spike model: detection rises with delta; at delta 8 power orders known, MED, sample."""
        config = ExperimentConfig(
            model=MeanModel.SPIKE,
            n=30,
            q=10,
            K=3,
            sigma=0.25,
            deltas=[4.0, 6.0, 8.0],
            replicates=3000,
            seed=7,
            p_value_methods=[
                PValueMethod.SELECTIVE_KNOWN,
                PValueMethod.SELECTIVE_MED,
                PValueMethod.SELECTIVE_SAMPLE,
            ],
        )
        results = run_power_sweep(config)
        reports = [r.report for r in results]
        for lower, upper in zip(reports, reports[1:]):
            gap = upper.detection_probability - lower.detection_probability
            se = math.hypot(lower.detection_standard_error, upper.detection_standard_error)
            assert gap > 2 * se
        known, med, sample = reports[-1].methods
        assert known.defined and med.defined and sample.defined
        for stronger, weaker in [(known, med), (med, sample)]:
            se = math.hypot(stronger.standard_error, weaker.standard_error)
            assert stronger.power >= weaker.power - 2 * se

    def test_sigma_direct_uniform_under_correlated_noise(self, tmp_path):
        """MN(0, I, Sigma) null data: the covariance-aware p-value is uniform."""
        path = tmp_path / "cov.csv"
        write_matrix(path, random_spd(3, 4))
        config = null_config(
            q=3, replicates=2000, p_value_methods=["sigma_direct"], covariance=path
        )
        summary = run_type1(config).report.methods[0]
        assert summary.ks_statistic < summary.ks_critical_1pct
