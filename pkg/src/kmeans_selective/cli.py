"""
kmeans-selective Command Line Interface.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical degeneracy.
"""
from __future__ import annotations

import sys
from collections.abc import Iterator
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import typer
from rich.console import Console
from rich.table import Table

from kmeans_selective.contrast import contrast_context
from kmeans_selective.core.config import settings
from kmeans_selective.core.errors import InvalidArgumentError, KMeansSelectiveError
from kmeans_selective.core.logging import bind_context, clear_context, get_logger, setup_logging
from kmeans_selective.covariance import factorize, whiten
from kmeans_selective.inference import (
    SelectiveTestResult,
    SigmaSource,
    cluster_pairs,
    p_sigma_selective,
    selective_from_support,
)
from kmeans_selective.io import (
    build_manifest,
    load_experiment_config,
    read_covariance,
    read_matrix,
)
from kmeans_selective.kmeans_trace import lloyd
from kmeans_selective.schemas.base import ErrorResponse
from kmeans_selective.schemas.experiment import PairPolicy, PValueMethod
from kmeans_selective.schemas.results import (
    ClusterTestReport,
    PairResult,
    SigmaReport,
    TraceSummary,
)
from kmeans_selective.simulation.experiments import run_power_sweep, run_type1_sweep
from kmeans_selective.simulation.outputs import write_outputs
from kmeans_selective.truncation import truncation_set
from kmeans_selective.variance import SigmaMethod, estimate_sigma

app = typer.Typer(
    name="kmsel",
    help="Selective p-values for differences in k-means cluster means",
    add_completion=True,
    no_args_is_help=True,
)
console = Console()
err_console = Console(stderr=True)
logger = get_logger(__name__)

_SIGMA_SOURCES = {
    SigmaMethod.MED: SigmaSource.MED,
    SigmaMethod.MED_UNCENTERED: SigmaSource.MED_UNCENTERED,
    SigmaMethod.SAMPLE: SigmaSource.SAMPLE,
}


class SimulationKind(str, Enum):
    TYPE1 = "type1"
    POWER = "power"


@contextmanager
def _handle_errors(command: str) -> Iterator[None]:
    """Report package errors on stderr and exit with their code."""
    bind_context(command=command)
    try:
        yield
    except KMeansSelectiveError as exc:
        logger.debug("command_failed", kind=exc.kind, error=exc.message)
        err_console.print(f"[bold red]Error:[/] {exc.message}")
        payload = ErrorResponse(error=exc.kind, message=exc.message, details=exc.details or None)
        sys.stderr.write(payload.model_dump_json() + "\n")
        raise typer.Exit(exc.exit_code) from None
    finally:
        clear_context()


def _emit(document: str, output: Path | None) -> None:
    if output is not None:
        output.write_text(document + "\n", encoding="utf-8")
    typer.echo(document)


@app.callback()
def main(
    log_level: str = typer.Option(settings.log_level, "--log-level", help="Logging level"),
    log_format: str = typer.Option(settings.log_format, "--log-format", help="console or json"),
) -> None:
    """Selective inference after k-means clustering."""
    setup_logging(level=log_level, log_format=log_format)


def _pair_result(result: SelectiveTestResult) -> PairResult:
    data = result.to_dict()
    data.pop("trace")
    return PairResult.model_validate(data)


@app.command()
def test(
    data: Path = typer.Argument(..., help="CSV data matrix (rows are observations)"),
    k: int = typer.Option(..., "--k", "-k", help="Number of clusters K"),
    pair: Optional[tuple[int, int]] = typer.Option(
        None, "--pair", help="Test clusters K1 and K2 (1-based labels)"
    ),
    all_pairs: bool = typer.Option(False, "--all-pairs", help="Test every pair of clusters"),
    sigma: Optional[float] = typer.Option(None, "--sigma", help="Known noise standard deviation"),
    sigma_estimator: SigmaMethod = typer.Option(
        SigmaMethod.MED, "--sigma-estimator", help="Estimator used when --sigma is absent"
    ),
    cov: Optional[Path] = typer.Option(None, "--cov", help="CSV q x q feature covariance"),
    whiten_data: bool = typer.Option(False, "--whiten", help="Whiten by --cov, then test with sigma=1"),
    ridge: float = typer.Option(0.0, "--ridge", help="Ridge added to --cov eigenvalues"),
    seed: int = typer.Option(0, "--seed", "-s", help="Seed for initial centroid sampling"),
    max_iter: int = typer.Option(settings.max_iter, "--max-iter", help="Maximum Lloyd updates"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Also write JSON here"),
) -> None:
    """Cluster DATA with k-means and test equality of cluster means."""
    with _handle_errors("test"):
        has_pair = pair is not None and pair[0] is not None
        if has_pair and all_pairs:
            raise InvalidArgumentError("use either --pair or --all-pairs")
        if sigma is not None and cov is not None:
            raise InvalidArgumentError("use either --sigma or --cov")
        if whiten_data and cov is None:
            raise InvalidArgumentError("--whiten requires --cov")

        x = read_matrix(data)
        inputs = [data]
        factors = None
        covariance_info: dict[str, Any] | None = None
        if cov is not None:
            factors = factorize(read_covariance(cov, x.q), ridge=ridge)
            covariance_info = {"path": str(cov), "ridge": ridge, "whitened": whiten_data}
            inputs.append(cov)
            if whiten_data:
                x = whiten(x, factors)
                factors = None
                sigma = 1.0

        sigma_info: dict[str, Any] | None = None
        source = SigmaSource.KNOWN
        if factors is None and sigma is None:
            estimate = estimate_sigma(x, sigma_estimator)
            if estimate.degenerate:
                raise InvalidArgumentError("estimated sigma is zero; pass --sigma")
            sigma = estimate.value
            source = _SIGMA_SOURCES[SigmaMethod(sigma_estimator)]
            sigma_info = estimate.to_dict()

        trace = lloyd(x, k, max_iter, seed)
        if has_pair:
            assert pair is not None
            k1, k2 = pair
            for label in (k1, k2):
                if not 1 <= label <= k:
                    raise InvalidArgumentError(f"cluster label {label} is outside 1..{k}")
            pairs = [(k1, k2)]
        else:
            pairs = cluster_pairs(k)

        results = []
        for k1, k2 in pairs:
            if factors is not None:
                result = p_sigma_selective(x, trace, k1, k2, factors.inv_sqrt, factors.sqrt)
            else:
                assert sigma is not None
                ctx = contrast_context(x, trace.final_labels, k1, k2)
                result = selective_from_support(ctx, truncation_set(trace, ctx), sigma, trace, source)
            results.append(_pair_result(result))

        flags = {
            "k": k,
            "pair": list(pair) if has_pair and pair is not None else None,
            "all_pairs": not has_pair,
            "sigma": sigma,
            "sigma_estimator": SigmaMethod(sigma_estimator).value,
            "cov": cov,
            "whiten": whiten_data,
            "ridge": ridge,
            "seed": seed,
            "max_iter": max_iter,
        }
        report = ClusterTestReport(
            manifest=build_manifest("test", flags, seeds={"lloyd": seed}, inputs=inputs),
            n=x.n,
            q=x.q,
            whitened=whiten_data,
            sigma_estimate=sigma_info,
            covariance=covariance_info,
            trace=TraceSummary.model_validate(trace.to_dict()),
            results=results,
        )
        _emit(report.to_json(), output)


@app.command("estimate-sigma")
def estimate_sigma_command(
    data: Path = typer.Argument(..., help="CSV data matrix"),
    method: SigmaMethod = typer.Option(SigmaMethod.MED, "--method", "-m", help="Estimator"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Also write JSON here"),
) -> None:
    """Estimate the isotropic noise standard deviation of DATA."""
    with _handle_errors("estimate-sigma"):
        x = read_matrix(data)
        estimate = estimate_sigma(x, method)
        report = SigmaReport(
            manifest=build_manifest("estimate-sigma", {"method": estimate.method.value}, inputs=[data]),
            **estimate.to_dict(),
        )
        _emit(report.to_json(), output)


def _simulation_overrides(
    model: str | None,
    n: int | None,
    q: list[int] | None,
    k: int | None,
    max_iter: int | None,
    sigma: float | None,
    delta: list[float] | None,
    replicates: int | None,
    alpha: float | None,
    seed: int | None,
    method: list[PValueMethod] | None,
    pair_policy: PairPolicy | None,
    cov: Path | None = None,
    ridge: float | None = None,
) -> dict[str, Any]:
    overrides: dict[str, Any] = {
        "covariance": cov,
        "ridge": ridge,
        "model": model,
        "n": n,
        "K": k,
        "T_max": max_iter,
        "sigma": sigma,
        "replicates": replicates,
        "alpha": alpha,
        "seed": seed,
        "pair_policy": pair_policy,
    }
    if q:
        overrides["q"] = q[0]
        if len(q) > 1:
            overrides["qs"] = list(q)
    if delta:
        overrides["delta"] = delta[0]
        if len(delta) > 1:
            overrides["deltas"] = list(delta)
    if method:
        overrides["p_value_methods"] = list(method)
    return overrides


@app.command()
def simulate(
    kind: SimulationKind = typer.Argument(..., help="type1 or power"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="TOML experiment file"),
    model: Optional[str] = typer.Option(None, "--model", help="global_null, spike, ortho_theta, three_clusters"),
    n: Optional[int] = typer.Option(None, "--n", help="Observations per dataset"),
    q: Optional[list[int]] = typer.Option(None, "--q", help="Features (repeat for a sweep)"),
    k: Optional[int] = typer.Option(None, "--k", "-k", help="Number of clusters K"),
    max_iter: Optional[int] = typer.Option(None, "--max-iter", help="Maximum Lloyd updates"),
    sigma: Optional[float] = typer.Option(None, "--sigma", help="Noise standard deviation"),
    delta: Optional[list[float]] = typer.Option(None, "--delta", help="Effect size (repeat for a sweep)"),
    replicates: Optional[int] = typer.Option(None, "--replicates", "-m", help="Monte Carlo replicates"),
    alpha: Optional[float] = typer.Option(None, "--alpha", help="Significance level"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Base seed"),
    method: Optional[list[PValueMethod]] = typer.Option(None, "--method", help="p-value method (repeatable)"),
    pair_policy: Optional[PairPolicy] = typer.Option(None, "--pair-policy", help="random or all_pairs"),
    cov: Optional[Path] = typer.Option(None, "--cov", help="CSV q x q noise covariance for the generated data"),
    ridge: Optional[float] = typer.Option(None, "--ridge", help="Ridge added to the --cov eigenvalues"),
    threads: Optional[int] = typer.Option(None, "--threads", help="Worker threads (default KMSEL_THREADS)"),
    output_dir: Path = typer.Option(settings.output_dir, "--output-dir", "-o", help="Output directory"),
) -> None:
    """Run a Monte Carlo Type I error or power experiment."""
    with _handle_errors("simulate"):
        if threads is not None and threads < 1:
            raise InvalidArgumentError(f"--threads must be >= 1, got {threads}")
        overrides = _simulation_overrides(
            model, n, q, k, max_iter, sigma, delta, replicates, alpha, seed, method, pair_policy,
            cov, ridge,
        )
        experiment = load_experiment_config(config, overrides)
        bind_context(kind=kind.value, seed=experiment.seed)

        if kind == SimulationKind.TYPE1:
            runs: list[Any] = run_type1_sweep(experiment, threads=threads)
        else:
            runs = run_power_sweep(experiment, threads=threads)
        reports = [run.report for run in runs]
        records = [record for run in runs for record in run.records]

        flags = {"kind": kind.value, "config": config, **experiment.model_dump(mode="json")}
        manifest = build_manifest(
            f"simulate {kind.value}",
            flags,
            seeds={"base": experiment.seed},
            inputs=[p for p in (config, experiment.covariance) if p is not None] or None,
        )
        paths = write_outputs(output_dir, reports, records, manifest)
        _print_summary(kind, reports)
        console.print(f"[bold green]Wrote[/] {', '.join(str(p) for p in paths.values())}")


def _print_summary(kind: SimulationKind, reports: list[Any]) -> None:
    if kind == SimulationKind.TYPE1:
        table = Table(title="Type I error")
        for column in ("q", "method", "tests", "reject rate", "KS stat", "KS 1% crit"):
            table.add_column(column, style="cyan" if column == "method" else "green")
        for report in reports:
            for summary in report.methods:
                table.add_row(
                    str(report.q),
                    summary.method,
                    str(summary.tests),
                    _fmt(summary.rejection_rate),
                    _fmt(summary.ks_statistic),
                    _fmt(summary.ks_critical_1pct),
                )
    else:
        table = Table(title="Power")
        for column in ("delta", "detection", "accepted", "method", "cond. power", "s.e."):
            table.add_column(column, style="cyan" if column == "method" else "green")
        for report in reports:
            for power in report.methods:
                table.add_row(
                    _fmt(report.delta),
                    _fmt(report.detection_probability),
                    str(report.accepted),
                    power.method,
                    _fmt(power.power),
                    _fmt(power.standard_error),
                )
    console.print(table)


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.4g}"


@app.command()
def info() -> None:
    """Show effective configuration."""
    table = Table(title="kmeans-selective Configuration")

    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="green")

    table.add_row("App Name", settings.app_name)
    table.add_row("Version", settings.app_version)
    table.add_row("Threads", str(settings.threads))
    table.add_row("Log Level", settings.log_level)
    table.add_row("Log Format", settings.log_format)
    table.add_row("Max Iterations", str(settings.max_iter))
    table.add_row("Max Reseeds", str(settings.max_reseeds))
    table.add_row("Quadratic Tolerance", f"{settings.quadratic_tol:g}")
    table.add_row("Merge Tolerance", f"{settings.merge_tol:g}")
    table.add_row("Output Directory", str(settings.output_dir))

    console.print(table)


if __name__ == "__main__":
    app()
