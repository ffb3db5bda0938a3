"""
Spatio-temporal extremes workflow - command-line orchestrator

Subcommands:
    simulate  Brown-Resnick field series -> binary/CSV file
    detrend   raw observations -> anomalies + regression coefficients
    analyze   anomalies -> cluster sizes, ordinal patterns, bootstrap intervals
    oracle    Monte Carlo limit values of the Brown-Resnick model

Every subcommand writes a JSON report and its CSV mirror. The process exit
status is 0 iff the report was written; errors map to one code per class.
"""

import argparse
import logging
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, get_args

import numpy as np
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from app_logging import get_logger
from config import settings
from errors import DegenerateBootstrapError, ExtremesError, NoClustersError, ZeroDenominatorError
from helper import bootstrap, br_simulator, cli_io, cluster_estimators, detrend, tail_oracle
from helper.field_core import regular_grid, resolve_threshold
from helper.report import distribution_rows, fmt_number, oracle_rows, write_report
from models.cluster import LabeledWindows, PatternDistribution
from models.field import FieldSeries, ThresholdSpec
from models.report import (
    AnalysisConfig,
    DetrendConfig,
    Diagnostics,
    FunctionalStat,
    OracleRunConfig,
    OracleStat,
    Report,
    SimulateConfig,
)
from models.risk import LocationKind, LocationMeasure, RiskFunctional, SpatialRiskMeasure
from models.simulation import OracleConfig, SimConfig

logger = get_logger(__name__)
console = Console(stderr=True)

# Non-binding ranges for r = mean, checked and logged after ``analyze``
PLAUSIBLE_SINGLE_CLUSTER = (0.25, 0.55)
PLAUSIBLE_RISING_PATTERN = (0.5, 0.8)

LOCATION_KINDS = list(get_args(LocationKind))
ANALYZE_STATS = list(get_args(FunctionalStat))
ORACLE_STATS = list(get_args(OracleStat))


class ExtremesPipeline:
    """
    Orchestrates the simulate / detrend / analyze / oracle workflows.

    Each run records step timings in ``workflow_stats`` and returns the
    written ``Report``.
    """

    def __init__(self, threads: Optional[int] = None):
        self.threads = threads or settings.threads
        self.workflow_stats: Dict[str, Any] = {}

    def _start(self, command: str) -> float:
        start = datetime.now()
        self.workflow_stats = {
            "workflow_id": f"{command}_{start.strftime('%Y%m%d_%H%M%S')}",
            "command": command,
            "start_time": start,
            "steps_completed": [],
            "step_seconds": {},
        }
        logger.info("Workflow started", workflow_id=self.workflow_stats["workflow_id"])
        return time.perf_counter()

    def _step(self, name: str, started: float) -> float:
        now = time.perf_counter()
        self.workflow_stats["steps_completed"].append(name)
        self.workflow_stats["step_seconds"][name] = now - started
        console.print(f"[green]✓ {name} ({now - started:.1f}s)[/green]")
        return now

    @staticmethod
    def _seed(value: Optional[int]) -> int:
        return settings.default_seed if value is None else value

    @staticmethod
    def _report_path(explicit: Optional[Path], command: str) -> Path:
        if explicit is not None:
            return Path(explicit)
        return settings.ensure_output_dir() / f"{command}_report.json"

    def _finish(self, report: Report, path: Path, started: float) -> Report:
        report.diagnostics.runtime_ms = int(round((time.perf_counter() - started) * 1000))
        json_path, csv_path = write_report(report, path)
        self.workflow_stats["report_path"] = str(json_path)
        self.workflow_stats["csv_path"] = str(csv_path)
        self.workflow_stats["status"] = "completed"
        logger.info(
            "Workflow completed",
            workflow_id=self.workflow_stats["workflow_id"],
            runtime_ms=report.diagnostics.runtime_ms,
        )
        return report

    # simulate

    def simulate(self, cfg: SimulateConfig, report_path: Optional[Path] = None) -> Report:
        started = self._start("simulate")
        seed = self._seed(cfg.rng_seed)
        console.print("\n[bold cyan]Step 1: Brown-Resnick simulation[/bold cyan]")
        grid = regular_grid(cfg.nx, cfg.ny, cfg.spacing)
        sim = SimConfig(
            grid=grid,
            n_times=cfg.n_times,
            subgrid_stride=cfg.subgrid_stride,
            temporal_truncation=cfg.temporal_truncation,
            rng_seed=seed,
        )
        series = br_simulator.simulate(cfg.variogram, sim)
        t = self._step("simulation", started)

        console.print("\n[bold cyan]Step 2: Writing field series[/bold cyan]")
        cli_io.write_field_series(series, cfg.output_path, cfg.output_format)
        self._step("write", t)

        extra = {"output": str(cfg.output_path), "seed": seed}
        extra.update(self._margin_checks(cfg, series))
        report = Report(
            command="simulate",
            config=cfg.model_dump(mode="json"),
            diagnostics=Diagnostics(extra=extra),
        )
        return self._finish(report, self._report_path(report_path, "simulate"), started)

    @staticmethod
    def _margin_checks(cfg: SimulateConfig, series: FieldSeries) -> Dict[str, Any]:
        values = np.asarray(series.values, dtype=np.float64)
        checks: Dict[str, Any] = {
            "fraction_at_most_one": fmt_number(float((values <= 1.0).mean())),
            "fraction_at_most_one_expected": fmt_number(float(np.exp(-1.0))),
        }
        if cfg.nx > 1:
            a = series.grid.nearest_site(series.grid.centroid)
            b = a + 1 if (a % cfg.nx) < cfg.nx - 1 else a - 1
            lag = series.grid.site_coords[b] - series.grid.site_coords[a]
            checks["extremal_coefficient_lag"] = [float(v) for v in lag]
            checks["extremal_coefficient_empirical"] = fmt_number(
                br_simulator.empirical_extremal_coefficient(series, a, b)
            )
            checks["extremal_coefficient_theoretical"] = fmt_number(
                br_simulator.theoretical_extremal_coefficient(cfg.variogram, lag)
            )
        return checks

    # detrend

    def detrend(self, cfg: DetrendConfig, report_path: Optional[Path] = None) -> Report:
        started = self._start("detrend")
        console.print("\n[bold cyan]Step 1: Loading observations[/bold cyan]")
        raw = cli_io.load_field_series(cfg.input_path, cfg.input_format, cfg.coord_system)
        t = self._step("load", started)

        console.print("\n[bold cyan]Step 2: Seasonal-trend regression[/bold cyan]")
        coeffs = detrend.fit_all_sites(raw, cfg.regression)
        residual = detrend.anomalies(raw, coeffs)
        t = self._step("regression", t)

        console.print("\n[bold cyan]Step 3: Writing anomalies and coefficients[/bold cyan]")
        cli_io.write_field_series(residual, cfg.output_path, cfg.output_format)
        detrend.export_coefficients(coeffs, cfg.coefficients_path)
        self._step("write", t)

        site_means = np.asarray(residual.values, dtype=np.float64).mean(axis=0)
        report = Report(
            command="detrend",
            config=cfg.model_dump(mode="json"),
            diagnostics=Diagnostics(
                extra={
                    "output": str(cfg.output_path),
                    "coefficients": str(cfg.coefficients_path),
                    "max_abs_site_mean": fmt_number(float(np.abs(site_means).max())),
                }
            ),
        )
        return self._finish(report, self._report_path(report_path, "detrend"), started)

    # analyze

    def analyze(self, cfg: AnalysisConfig) -> Report:
        started = self._start("analyze")
        seed = self._seed(cfg.rng_seed)
        boot_cfg = cfg.bootstrap.model_copy(update={"rng_seed": seed})

        console.print("\n[bold cyan]Step 1: Loading field series[/bold cyan]")
        series = cli_io.load_field_series(cfg.input_path, cfg.input_format, cfg.coord_system)
        measure = SpatialRiskMeasure()
        if cfg.exposure_path is not None:
            measure = SpatialRiskMeasure(exposure=cli_io.load_exposure(cfg.exposure_path, series.site_count))
        location = LocationMeasure(kind=cfg.location_measure)
        t = self._step("load", started)

        rows = []
        diagnostics = Diagnostics()
        thresholds: Dict[str, str] = {}
        skipped: List[str] = []
        no_intervals: List[str] = []
        for r in cfg.risk_functionals:
            console.print(f"\n[bold cyan]Step 2: Estimators for r = {r.name}[/bold cyan]")
            rv = cluster_estimators.risk_series(series, r, threads=self.threads)
            if cfg.threshold is not None:
                spec = ThresholdSpec.absolute(cfg.threshold)
            else:
                spec = ThresholdSpec.quantile(cfg.quantile_level, basis=cfg.threshold_basis)
            u = resolve_threshold(spec, rv, series)
            thresholds[r.name] = fmt_number(u)
            if diagnostics.threshold is None:
                diagnostics.threshold = fmt_number(u)

            families = [cluster_estimators.cluster_size_windows(rv, u, cfg.lmax)]
            for length in cfg.pattern_lengths:
                families.append(
                    cluster_estimators.pattern_windows(rv, rv, u, length, exact_size=cfg.exact_size)
                )
                if cfg.stats:
                    times = cluster_estimators.pattern_times(rv, u, length, cfg.exact_size)
                for stat in cfg.stats:
                    values = cluster_estimators.statistic_series(
                        series, stat, u, times, measure, location, threads=self.threads
                    )
                    families.append(
                        cluster_estimators.pattern_windows(
                            values, rv, u, length, exact_size=cfg.exact_size, family=f"{stat}_l{length}"
                        )
                    )

            for windows in families:
                dist = self._estimate(
                    windows, boot_cfg if cfg.run_bootstrap else None, skipped, no_intervals, r
                )
                if dist is None:
                    continue
                rows.extend(distribution_rows(dist, prefix=f"{r.name}/"))
                diagnostics.n_ties += dist.diagnostics.get("n_ties", 0)
                diagnostics.n_degenerate_replicates += dist.n_degenerate or 0
                if windows.family == "cluster_size":
                    diagnostics.n_clusters += dist.denominator_count
                    self._check_plausibility(r, dist, families)
            t = self._step(f"estimators {r.name}", t)

        diagnostics.extra = {"thresholds": thresholds, "seed": seed}
        if skipped:
            diagnostics.extra["skipped_families"] = skipped
        if no_intervals:
            diagnostics.extra["families_without_intervals"] = no_intervals
        report = Report(
            command="analyze",
            config=cfg.model_dump(mode="json"),
            estimates=rows,
            diagnostics=diagnostics,
        )
        report = self._finish(report, self._report_path(cfg.output_path, "analyze"), started)
        self._display_estimates(report)
        return report

    def _estimate(
        self,
        windows: LabeledWindows,
        boot_cfg,
        skipped: List[str],
        no_intervals: List[str],
        r: RiskFunctional,
    ) -> Optional[PatternDistribution]:
        try:
            dist = cluster_estimators.distribution_from_windows(windows)
        except NoClustersError:
            # Only the cluster-size family is mandatory
            if windows.family == "cluster_size":
                raise
            logger.warning("No qualifying clusters", risk=r.name, family=windows.family)
            skipped.append(f"{r.name}/{windows.family}")
            return None
        if boot_cfg is None:
            return dist
        counts = bootstrap.block_counts(windows, boot_cfg)
        try:
            summary = bootstrap.bootstrap_ci(counts, boot_cfg, threads=self.threads)
        except (ZeroDenominatorError, DegenerateBootstrapError) as e:
            if windows.family == "cluster_size":
                raise
            # Point estimate stands; the family is reported without an interval
            logger.warning("Bootstrap unavailable", risk=r.name, family=windows.family, reason=str(e))
            no_intervals.append(f"{r.name}/{windows.family}")
            return dist
        return bootstrap.attach_intervals(dist, summary)

    @staticmethod
    def _check_plausibility(r: RiskFunctional, sizes: PatternDistribution, families: List[LabeledWindows]) -> None:
        if r.kind != "mean":
            return
        p1 = sizes.prob("1")
        checks = {"p_cluster_size_1": (p1, PLAUSIBLE_SINGLE_CLUSTER)}
        rising = [w for w in families if w.family == "pattern_l2"]
        if rising and rising[0].n_windows:
            counts = rising[0].counts()
            checks["p_pattern_rising"] = (float(counts[0]) / counts.sum(), PLAUSIBLE_RISING_PATTERN)
        for name, (value, (lo, hi)) in checks.items():
            if lo <= value <= hi:
                logger.info("Plausibility check passed", check=name, value=value, low=lo, high=hi)
            else:
                logger.warning("Plausibility check outside corridor", check=name, value=value, low=lo, high=hi)

    # oracle

    def oracle(self, cfg: OracleRunConfig) -> Report:
        started = self._start("oracle")
        seed = self._seed(cfg.rng_seed)
        grid = regular_grid(cfg.nx, cfg.ny, cfg.spacing)
        longest = max(cfg.pattern_lengths, default=2) + (1 if cfg.exact_size else 0)
        oracle_cfg = OracleConfig(
            variogram=cfg.variogram,
            grid=grid,
            window=max(cfg.lmax, longest),
            anchor_site=cfg.anchor_site,
            draws=cfg.draws,
            quadrature_points=cfg.quadrature_points,
            rng_seed=seed,
        )
        risks = [RiskFunctional.parse(text) for text in cfg.risks]
        console.print("\n[bold cyan]Step 1: Monte Carlo limit values[/bold cyan]")
        rows = []
        for r, estimates in tail_oracle.iter_oracle_families(
            oracle_cfg,
            risks,
            cfg.lmax,
            cfg.pattern_lengths,
            cfg.stats,
            location=LocationMeasure(kind=cfg.location_measure),
            exact_size=cfg.exact_size,
            threads=self.threads,
        ):
            rows.extend(oracle_rows(estimates, prefix=f"{r.name}/"))
        self._step("oracle", started)

        report = Report(
            command="oracle",
            config=cfg.model_dump(mode="json"),
            estimates=rows,
            diagnostics=Diagnostics(
                extra={"anchor_site": oracle_cfg.anchor, "draws": cfg.draws, "seed": seed}
            ),
        )
        report = self._finish(report, self._report_path(cfg.output_path, "oracle"), started)
        self._display_estimates(report)
        return report

    def _display_estimates(self, report: Report) -> None:
        """Display a summary table of the estimates."""
        console.print(Panel.fit(f"[bold green]{report.command} completed[/bold green]", style="green"))
        table = Table(show_header=True, header_style="bold magenta")
        table.add_column("Family", style="cyan")
        table.add_column("Label")
        table.add_column("Prob", style="green")
        table.add_column("Interval")
        for row in report.estimates:
            interval = ""
            if row.ci_lo is not None and row.ci_hi is not None:
                interval = f"[{float(row.ci_lo):.3f}, {float(row.ci_hi):.3f}]"
            table.add_row(row.family, row.label, f"{float(row.prob):.4f}", interval)
        console.print(table)
        console.print(f"[bold]Report:[/bold] {self.workflow_stats.get('report_path')}")


def _parse_lengths(text: str) -> List[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file; flags override its keys")
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--threads", type=int, help="worker threads")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Temporal clusters and ordinal patterns of spatial extremes"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a Brown-Resnick field series")
    _common_options(sim)
    sim.add_argument("--nx", type=int)
    sim.add_argument("--ny", type=int)
    sim.add_argument("--spacing", type=float)
    sim.add_argument("--n-times", type=int)
    sim.add_argument("--stride", type=int, dest="subgrid_stride")
    sim.add_argument("--truncation", type=int, dest="temporal_truncation")
    sim.add_argument("--format", dest="output_format", choices=["binary", "csv"])
    sim.add_argument("--output", "-o", type=Path, dest="output_path", help="field series file")
    sim.add_argument("--report", type=Path, help="JSON report path")

    det = sub.add_parser("detrend", help="seasonal-trend regression and anomalies")
    _common_options(det)
    det.add_argument("--input", type=Path, dest="input_path")
    det.add_argument("--format", dest="input_format", choices=["binary", "csv"])
    det.add_argument("--coord-system", choices=["lonlat", "planar_km"])
    det.add_argument("--n-basis", type=int)
    det.add_argument("--period", type=float)
    det.add_argument("--radius", type=float, help="pooling radius in km")
    det.add_argument("--kernel", choices=["equal", "gaussian"])
    det.add_argument("--output", "-o", type=Path, dest="output_path", help="anomaly series file")
    det.add_argument("--output-format", choices=["binary", "csv"])
    det.add_argument("--coefficients", type=Path, dest="coefficients_path")
    det.add_argument("--report", type=Path, help="JSON report path")

    ana = sub.add_parser("analyze", help="cluster and pattern estimators with bootstrap intervals")
    _common_options(ana)
    ana.add_argument("--input", type=Path, dest="input_path")
    ana.add_argument("--format", dest="input_format", choices=["binary", "csv"])
    ana.add_argument("--coord-system", choices=["lonlat", "planar_km"])
    ana.add_argument("--risk", action="append", dest="risks", help="max|min|mean|median|quantile:<p>")
    ana.add_argument("--quantile-level", type=float)
    ana.add_argument("--threshold", type=float, help="absolute threshold u")
    ana.add_argument("--threshold-basis", choices=["risk_series", "pooled_field"])
    ana.add_argument("--lmax", type=int)
    ana.add_argument("--pattern-lengths", type=_parse_lengths, help="comma separated, e.g. 2,3")
    ana.add_argument("--exact-size", action="store_true", default=None)
    ana.add_argument("--stats", nargs="+", choices=ANALYZE_STATS)
    ana.add_argument("--location-measure", choices=LOCATION_KINDS)
    ana.add_argument("--exposure", type=Path, dest="exposure_path")
    ana.add_argument("--block-length", type=int)
    ana.add_argument("--replicates", type=int)
    ana.add_argument("--multiplier-law", choices=["gaussian", "rademacher"])
    ana.add_argument("--no-bootstrap", action="store_true")
    ana.add_argument("--output", "-o", type=Path, dest="output_path", help="JSON report path")

    orc = sub.add_parser("oracle", help="Monte Carlo limit values of the Brown-Resnick model")
    _common_options(orc)
    orc.add_argument("--nx", type=int)
    orc.add_argument("--ny", type=int)
    orc.add_argument("--spacing", type=float)
    orc.add_argument("--risk", action="append", dest="risks")
    orc.add_argument("--lmax", type=int)
    orc.add_argument("--pattern-lengths", type=_parse_lengths)
    orc.add_argument("--stats", nargs="+", choices=ORACLE_STATS)
    orc.add_argument("--location-measure", choices=LOCATION_KINDS)
    orc.add_argument("--exact-size", action="store_true", default=None)
    orc.add_argument("--anchor", type=int, dest="anchor_site")
    orc.add_argument("--draws", type=int)
    orc.add_argument("--quadrature-points", type=int)
    orc.add_argument("--output", "-o", type=Path, dest="output_path", help="JSON report path")
    return parser


def _overrides(args: argparse.Namespace, keys: List[str]) -> Dict[str, Any]:
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def build_config(args: argparse.Namespace):
    """Merge the JSON config file with command-line flags into the run config model."""
    data = cli_io.read_json_config(args.config)
    if args.seed is not None:
        data["rng_seed"] = args.seed

    if args.command == "simulate":
        data.update(_overrides(args, ["nx", "ny", "spacing", "n_times", "subgrid_stride",
                                      "temporal_truncation", "output_format", "output_path"]))
        return SimulateConfig(**data)

    if args.command == "detrend":
        data.update(_overrides(args, ["input_path", "input_format", "coord_system",
                                      "output_path", "output_format", "coefficients_path"]))
        regression = dict(data.get("regression", {}))
        regression.update(
            {
                key: value
                for key, value in (
                    ("n_seasonal_basis", args.n_basis),
                    ("period", args.period),
                    ("pooling_radius", args.radius),
                    ("pooling_kernel", args.kernel),
                )
                if value is not None
            }
        )
        data["regression"] = regression
        data.pop("rng_seed", None)
        return DetrendConfig(**data)

    if args.command == "analyze":
        data.update(_overrides(args, ["input_path", "input_format", "coord_system", "risks",
                                      "quantile_level", "threshold", "threshold_basis", "lmax",
                                      "pattern_lengths", "exact_size", "stats", "location_measure",
                                      "exposure_path", "output_path"]))
        if args.no_bootstrap:
            data["run_bootstrap"] = False
        boot = dict(data.get("bootstrap", {}))
        boot.update(
            {
                key: value
                for key, value in (
                    ("block_length", args.block_length),
                    ("replicates", args.replicates),
                    ("multiplier_law", args.multiplier_law),
                )
                if value is not None
            }
        )
        data["bootstrap"] = boot
        return AnalysisConfig(**data)

    data.update(_overrides(args, ["nx", "ny", "spacing", "risks", "lmax", "pattern_lengths", "stats",
                                  "location_measure", "exact_size", "anchor_site", "draws",
                                  "quadrature_points", "output_path"]))
    return OracleRunConfig(**data)


def run(args: argparse.Namespace) -> Report:
    """Run one subcommand and return its report."""
    if args.threads is not None:
        settings.threads = args.threads
    cfg = build_config(args)
    pipeline = ExtremesPipeline(threads=settings.threads)
    if args.command == "simulate":
        return pipeline.simulate(cfg, args.report)
    if args.command == "detrend":
        return pipeline.detrend(cfg, args.report)
    if args.command == "analyze":
        return pipeline.analyze(cfg)
    return pipeline.oracle(cfg)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    console.print(Panel.fit(
        "[bold blue]Spatio-temporal extremes[/bold blue]\n"
        f"Command: {args.command}",
        style="blue"
    ))
    try:
        run(args)
        return 0

    except ExtremesError as e:
        console.print(f"\n[bold red]Error:[/bold red] {e}")
        logger.error("Workflow failed", error=str(e), error_type=type(e).__name__, exit_code=e.exit_code)
        return e.exit_code

    except ValidationError as e:
        console.print(f"\n[bold red]Invalid configuration:[/bold red] {e}")
        logger.error("Invalid configuration", error=str(e))
        return 2

    except KeyboardInterrupt:
        console.print("\n[yellow]Workflow interrupted by user[/yellow]")
        return 1

    except Exception as e:
        console.print(f"\n[bold red]Error:[/bold red] {str(e)}")
        logger.error("Main workflow failed", error=str(e), error_type=type(e).__name__)
        return 1


if __name__ == "__main__":
    sys.exit(main())
