"""
Monte Carlo experiments: null calibration (Type I error) and power.

Replicates are independent and run on a thread pool. Each replicate derives
its seeds from (base seed, replicate index, attempt, stream) alone, so the
output does not depend on the number of threads or on scheduling order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from functools import partial
from typing import Any

import numpy as np
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from kmeans_selective.contrast import ContrastContext, contrast_context
from kmeans_selective.core.config import settings
from kmeans_selective.core.errors import (
    DegenerateContrastError,
    EmptyClusterError,
    InvalidArgumentError,
    NumericalConsistencyError,
)
from kmeans_selective.core.logging import get_logger
from kmeans_selective.covariance import CovarianceFactors, factorize
from kmeans_selective.inference import (
    SigmaSource,
    cluster_pairs,
    p_naive,
    p_sigma_selective,
    rejection_rate,
    selective_from_support,
)
from kmeans_selective.intervals import IntervalSet
from kmeans_selective.io import read_covariance
from kmeans_selective.kmeans_trace import ClusterTrace, DataMatrix, lloyd, make_generator
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
from kmeans_selective.simulation.calibration import ks_uniformity
from kmeans_selective.simulation.models import (
    effect_size,
    gen_matrix_normal,
    gen_matrix_normal_cov,
    mean_matrix,
    true_pair_recovered,
    true_partition,
)
from kmeans_selective.truncation import truncation_set
from kmeans_selective.variance import SigmaMethod, estimate_sigma

logger = get_logger(__name__)


class SeedStream(IntEnum):
    """Independent random streams inside one replicate."""

    DATA = 0
    LLOYD = 1
    PAIR = 2


def replicate_seed(base_seed: int, replicate: int, attempt: int, stream: SeedStream) -> int:
    """64-bit seed for one stream of one replicate attempt."""
    sequence = np.random.SeedSequence(base_seed, spawn_key=(replicate, attempt, int(stream)))
    return int(sequence.generate_state(1, np.uint64)[0])


_ESTIMATED = {
    PValueMethod.SELECTIVE_MED: (SigmaMethod.MED, SigmaSource.MED),
    PValueMethod.SELECTIVE_MED_UNCENTERED: (
        SigmaMethod.MED_UNCENTERED,
        SigmaSource.MED_UNCENTERED,
    ),
    PValueMethod.SELECTIVE_SAMPLE: (SigmaMethod.SAMPLE, SigmaSource.SAMPLE),
}


@dataclass
class ReplicateRecord:
    """One tested pair in one replicate."""

    replicate: int
    q: int
    delta: float
    data_seed: int
    lloyd_seed: int
    reseeds: int
    T: int
    converged: bool
    pair: tuple[int, int]
    stat: float
    effect: float
    recovered: bool
    p_values: dict[str, float] = field(default_factory=dict)
    degenerate_sigma: int = 0
    numerical_failures: int = 0

    def to_rows(self) -> list[dict[str, Any]]:
        """One flat row per p-value method."""
        base = {
            "replicate": self.replicate,
            "q": self.q,
            "delta": self.delta,
            "k1": self.pair[0],
            "k2": self.pair[1],
            "stat": self.stat,
            "effect": self.effect,
            "recovered": self.recovered,
            "T": self.T,
            "converged": self.converged,
            "reseeds": self.reseeds,
            "data_seed": self.data_seed,
            "lloyd_seed": self.lloyd_seed,
        }
        return [{**base, "method": m, "p_value": p} for m, p in self.p_values.items()]


def _p_values(
    x: DataMatrix,
    trace: ClusterTrace,
    ctx: ContrastContext,
    config: ExperimentConfig,
    record: ReplicateRecord,
    factors: CovarianceFactors | None = None,
) -> None:
    support: IntervalSet | None = None
    for method in config.p_value_methods:
        try:
            if method == PValueMethod.NAIVE:
                p = p_naive(ctx, x.q, config.sigma)
            elif method == PValueMethod.SIGMA_DIRECT:
                sigma_factors = factors or CovarianceFactors.spherical(x.q, config.sigma)
                p = p_sigma_selective(
                    x, trace, *ctx.pair, sigma_factors.inv_sqrt, sigma_factors.sqrt
                ).p_value
            else:
                if support is None:
                    support = truncation_set(trace, ctx)
                if method == PValueMethod.SELECTIVE_KNOWN:
                    sigma, source = config.sigma, SigmaSource.KNOWN
                else:
                    sigma_method, source = _ESTIMATED[method]
                    estimate = estimate_sigma(x, sigma_method)
                    if estimate.degenerate:
                        record.degenerate_sigma += 1
                        record.p_values[method.value] = math.nan
                        continue
                    sigma = estimate.value
                p = selective_from_support(ctx, support, sigma, trace, source).p_value
        except NumericalConsistencyError as exc:
            logger.warning(
                "replicate_numerical_failure",
                replicate=record.replicate,
                method=method.value,
                error=str(exc),
            )
            record.numerical_failures += 1
            p = math.nan
        record.p_values[method.value] = p


def _cluster(
    x: DataMatrix, config: ExperimentConfig, replicate: int
) -> tuple[ClusterTrace, int, int]:
    """Run Lloyd, drawing a fresh seed after every empty-cluster failure."""
    retrying = Retrying(
        stop=stop_after_attempt(config.max_reseeds + 1),
        retry=retry_if_exception_type(EmptyClusterError),
        reraise=True,
    )
    for attempt in retrying:
        with attempt:
            number = attempt.retry_state.attempt_number - 1
            seed = replicate_seed(config.seed, replicate, number, SeedStream.LLOYD)
            trace = lloyd(x, config.K, config.T_max, seed)
    return trace, seed, number


def _pairs(config: ExperimentConfig, replicate: int) -> list[tuple[int, int]]:
    pairs = cluster_pairs(config.K)
    if config.pair_policy == PairPolicy.ALL_PAIRS:
        return pairs
    rng = make_generator(replicate_seed(config.seed, replicate, 0, SeedStream.PAIR))
    return [pairs[int(rng.integers(len(pairs)))]]


def run_replicate(
    config: ExperimentConfig,
    replicate: int,
    q: int | None = None,
    delta: float | None = None,
    factors: CovarianceFactors | None = None,
) -> list[ReplicateRecord]:
    """
    Generate one dataset, cluster it, and test the selected pair(s).

    With ``factors`` the noise is MN(0, I, Sigma) rather than spherical.
    """
    q = config.q if q is None else q
    delta = config.delta if delta is None else delta
    mu = mean_matrix(config.model, config.n, q, delta)
    data_seed = replicate_seed(config.seed, replicate, 0, SeedStream.DATA)
    if factors is None:
        x = gen_matrix_normal(mu, config.sigma, data_seed)
    else:
        x = gen_matrix_normal_cov(mu, factors, data_seed)
    trace, lloyd_seed, reseeds = _cluster(x, config, replicate)
    truth = true_partition(config.n) if config.model != MeanModel.GLOBAL_NULL else None

    records = []
    for pair in _pairs(config, replicate):
        ctx = contrast_context(x, trace.final_labels, *pair)
        record = ReplicateRecord(
            replicate=replicate,
            q=q,
            delta=delta,
            data_seed=data_seed,
            lloyd_seed=lloyd_seed,
            reseeds=reseeds,
            T=trace.T,
            converged=trace.converged,
            pair=pair,
            stat=ctx.stat,
            effect=effect_size(mu, ctx.nu),
            recovered=truth is not None and true_pair_recovered(trace.final_labels, pair, truth),
        )
        try:
            ctx.require_direction()
        except DegenerateContrastError:
            record.p_values = {m.value: math.nan for m in config.p_value_methods}
        else:
            _p_values(x, trace, ctx, config, record, factors)
        records.append(record)
    return records


def covariance_factors(config: ExperimentConfig, q: int) -> CovarianceFactors | None:
    """Factor the configured noise covariance, if any."""
    if config.covariance is None:
        return None
    return factorize(read_covariance(config.covariance, q), config.ridge)


def run_replicates(
    config: ExperimentConfig,
    q: int | None = None,
    delta: float | None = None,
    threads: int | None = None,
) -> list[ReplicateRecord]:
    """All replicates, ordered by replicate index."""
    workers = max(1, min(threads or settings.threads, config.replicates))
    factors = covariance_factors(config, config.q if q is None else q)
    job = partial(run_replicate, config, q=q, delta=delta, factors=factors)
    if workers == 1:
        chunks = [job(m) for m in range(config.replicates)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            chunks = list(executor.map(job, range(config.replicates)))
    return [record for chunk in chunks for record in chunk]


def _diagnostics(records: list[ReplicateRecord]) -> Diagnostics:
    per_replicate = {r.replicate: r for r in records}
    reps = list(per_replicate.values())
    return Diagnostics(
        replicates=len(reps),
        reseeds=sum(r.reseeds for r in reps),
        reseeded_replicates=sum(1 for r in reps if r.reseeds > 0),
        converged=sum(1 for r in reps if r.converged),
        mean_iterations=float(np.mean([r.T for r in reps])) if reps else 0.0,
        degenerate_sigma=sum(r.degenerate_sigma for r in records),
        degenerate_contrast=sum(1 for r in records if r.stat == 0.0),
        numerical_failures=sum(r.numerical_failures for r in records),
    )


def method_p_values(records: list[ReplicateRecord], method: PValueMethod | str) -> np.ndarray:
    """p-values of one method in record order."""
    key = PValueMethod(method).value
    return np.array([r.p_values[key] for r in records], dtype=np.float64)


@dataclass
class Type1Result:
    """Null experiment output: summary report plus per-test records."""

    report: Type1Report
    records: list[ReplicateRecord]


def run_type1(config: ExperimentConfig, q: int | None = None, threads: int | None = None) -> Type1Result:
    """
    Simulate under the configured model (normally the global null) and
    summarize each method's p-values: rejection rate and KS distance to uniform.
    """
    q = config.q if q is None else q
    records = run_replicates(config, q=q, threads=threads)
    summaries = []
    for method in config.p_value_methods:
        p = method_p_values(records, method)
        finite = p[np.isfinite(p)]
        if finite.size:
            ks = ks_uniformity(finite)
            summary = MethodSummary(
                method=method.value,
                tests=int(finite.size),
                rejection_rate=rejection_rate(finite, config.alpha),
                mean_p=float(np.mean(finite)),
                ks_statistic=ks.statistic,
                ks_pvalue=ks.pvalue,
                ks_critical_1pct=ks.critical_1pct,
            )
        else:
            summary = MethodSummary(
                method=method.value,
                tests=0,
                rejection_rate=None,
                mean_p=None,
                ks_statistic=None,
                ks_pvalue=None,
                ks_critical_1pct=None,
            )
        summaries.append(summary)
    report = Type1Report(
        config=config,
        q=q,
        alpha=config.alpha,
        methods=summaries,
        diagnostics=_diagnostics(records),
    )
    logger.info(
        "type1_finished",
        q=q,
        replicates=config.replicates,
        rejection={s.method: s.rejection_rate for s in summaries},
    )
    return Type1Result(report, records)


def run_type1_sweep(config: ExperimentConfig, threads: int | None = None) -> list[Type1Result]:
    """One null experiment per entry of ``config.qs`` (or just ``config.q``)."""
    return [run_type1(config, q=q, threads=threads) for q in config.qs or [config.q]]


@dataclass
class PowerResult:
    """Power experiment output at one effect size."""

    report: PowerReport
    records: list[ReplicateRecord]


def run_power(config: ExperimentConfig, delta: float | None = None, threads: int | None = None) -> PowerResult:
    """
    Detection probability (tested clusters are both true clusters) and, among
    those, the conditional power of each method at level alpha.
    """
    if config.model == MeanModel.GLOBAL_NULL:
        raise InvalidArgumentError("power needs a model with true clusters, not global_null")
    delta = config.delta if delta is None else delta
    records = run_replicates(config, delta=delta, threads=threads)
    accepted = [r for r in records if r.recovered]
    detection = len(accepted) / len(records) if records else math.nan

    powers = []
    for method in config.p_value_methods:
        p = method_p_values(accepted, method) if accepted else np.empty(0)
        finite = p[np.isfinite(p)]
        if finite.size:
            power = float(np.mean(finite <= config.alpha))
            se = math.sqrt(power * (1.0 - power) / finite.size)
            powers.append(
                ConditionalPower(method=method.value, power=power, standard_error=se, defined=True)
            )
        else:
            powers.append(
                ConditionalPower(
                    method=method.value, power=None, standard_error=None, defined=False
                )
            )

    report = PowerReport(
        config=config,
        delta=delta,
        alpha=config.alpha,
        replicates=config.replicates,
        accepted=len(accepted),
        detection_probability=detection,
        detection_standard_error=math.sqrt(detection * (1.0 - detection) / max(len(records), 1)),
        methods=powers,
        diagnostics=_diagnostics(records),
    )
    logger.info("power_finished", delta=delta, detection=detection, accepted=len(accepted))
    return PowerResult(report, records)


def run_power_sweep(config: ExperimentConfig, threads: int | None = None) -> list[PowerResult]:
    """One power experiment per entry of ``config.deltas`` (or just ``config.delta``)."""
    return [run_power(config, delta=d, threads=threads) for d in config.deltas or [config.delta]]
