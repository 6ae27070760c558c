import logging
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

import click
import typer
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from Market.network_model import per_minute_to_hourly
from Solvers.pipeline import solve_market
from Solvers.refiner import SolveReport
from Utilities.calibration import calibrate as calibrate_instance
from Utilities.database_manager import LedgerManager
from Utilities.errors import ConfigurationError, MixfleetError
from Utilities.instance_generator import generate_instance
from Utilities.instance_io import read_instance, write_instance
from Utilities.log_setup import configure_logging
from Utilities.reports import write_solve_outputs, write_sweep_outputs
from Utilities.sweeps import SweepSpec, SweepVariable, sweep as run_sweep
from Utilities.validation import check as check_instance

logger = logging.getLogger("mixfleet")

app = typer.Typer(
    name="mixfleet",
    help="Profit-maximizing pricing, wages and AV deployment for a mixed ride-sourcing fleet.",
    add_completion=False,
    no_args_is_help=True,
)
console = Console()

CALIBRATION_REPORT = "calibration.json"


def _ledger(path: Optional[Path]) -> Optional[LedgerManager]:
    """Ledger from --ledger, else MIXFLEET_LEDGER, else none"""
    location = path or os.getenv("MIXFLEET_LEDGER")
    return LedgerManager(location) if location else None


def _summary_table(title: str, report: SolveReport) -> Table:
    table = Table(title=title)
    table.add_column("quantity")
    table.add_column("value", justify="right")
    metrics = report.metrics
    rows = [
        ("status", report.status.value),
        ("profit ($/h)", f"{per_minute_to_hourly(report.profit):.2f}"),
        ("upper bound ($/h)", f"{per_minute_to_hourly(report.upper_bound):.2f}"),
        ("gap", "undefined" if math.isnan(report.gap) else f"{report.gap:.4%}"),
        ("wage ($/h)", f"{report.decision.q:.2f}"),
    ]
    if metrics is not None:
        rows += [
            ("AVs", f"{metrics.N_A:.1f}"),
            ("human drivers", f"{metrics.N_H:.1f}"),
            ("demand (pax/min)", f"{metrics.total_demand:.2f}"),
            ("mean fare ($/ride)", f"{metrics.mean_fare:.2f}"),
            ("social welfare ($/h)", f"{per_minute_to_hourly(metrics.social_welfare):.2f}"),
        ]
    for name, value in rows:
        table.add_row(name, value)
    return table


@app.callback()
def configure(
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Overrides MIXFLEET_LOG_LEVEL"),
):
    configure_logging(log_level or os.getenv("MIXFLEET_LOG_LEVEL", "INFO"))


@app.command()
def generate(
    seed: int = typer.Option(..., "--seed", help="Any 64-bit integer"),
    out: Path = typer.Option(..., "--out", help="Directory for the instance files"),
    zones: int = typer.Option(19, "--zones", min=1, max=19),
    calibrate: bool = typer.Option(False, "--calibrate", help="Calibrate before writing"),
):
    """Write a seeded synthetic instance."""
    files = generate_instance(seed, zones)
    if calibrate:
        instance, report = calibrate_instance(files.instance, files.params, files.settings)
        files = files.with_instance(instance)
        write_instance(files, out)
        (out / CALIBRATION_REPORT).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    else:
        write_instance(files, out)
    console.print(f"wrote {files.instance.M} zones to {out}")


@app.command()
def calibrate(
    source: Path = typer.Option(..., "--in", help="Instance directory"),
    out: Optional[Path] = typer.Option(None, "--out", help="Where to write; defaults to --in"),
):
    """Fit demand scale and outside costs to the no-AV reference market."""
    files = read_instance(source)
    instance, report = calibrate_instance(files.instance, files.params, files.settings)
    target = out or source
    write_instance(files.with_instance(instance), target)
    (target / CALIBRATION_REPORT).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")

    table = Table(title="calibration")
    table.add_column("quantity")
    table.add_column("achieved", justify="right")
    table.add_column("reference", justify="right")
    table.add_row("demand (pax/min)", f"{report.demand:.2f}", "148")
    table.add_row("mode share", f"{report.mode_share:.2%}", "15%")
    table.add_row("human drivers", f"{report.drivers:.0f}", f"{report.reference_drivers:.0f}")
    table.add_row("wage ($/h)", f"{report.wage:.2f}", f"{report.reference_wage:.1f}")
    table.add_row("mean fare ($/ride)", f"{report.mean_fare:.2f}", f"{report.reference_fare:.1f}")
    console.print(table)
    if not report.reached:
        console.print("[yellow]targets not reached; closest achievable values written[/yellow]")


@app.command()
def solve(
    source: Path = typer.Option(..., "--in", help="Instance directory"),
    out: Path = typer.Option(..., "--out", help="Directory for solution.csv and summary.csv"),
    regulated: bool = typer.Option(False, "--regulated", help="Enforce the wage floor q_min"),
    ledger: Optional[Path] = typer.Option(None, "--ledger", help="SQLite run ledger"),
):
    """Solve one scenario: upper bound, then a feasible decision."""
    files = read_instance(source)
    params = files.params
    if regulated and params.q_min is None:
        raise ConfigurationError("--regulated needs q_min in params.json")
    report = solve_market(files.instance, params, files.settings, regulated=regulated)
    write_solve_outputs(report, out)
    manager = _ledger(ledger)
    if manager is not None:
        manager.record(report, scenario=source.name)
    console.print(_summary_table(f"solve {source.name}", report))
    if not report.ok:
        raise typer.Exit(code=3)


@app.command()
def sweep(
    source: Path = typer.Option(..., "--in", help="Instance directory"),
    var: SweepVariable = typer.Option(..., "--var", help="D or q_min"),
    lo: float = typer.Option(..., "--lo", help="$/hour"),
    hi: float = typer.Option(..., "--hi", help="$/hour"),
    step: float = typer.Option(..., "--step", help="$/hour"),
    out: Path = typer.Option(..., "--out", help="Directory for sweep.csv and regimes.json"),
    ledger: Optional[Path] = typer.Option(None, "--ledger", help="SQLite run ledger"),
):
    """Sweep the AV cost or the wage floor and detect regimes."""
    files = read_instance(source)
    try:
        spec = SweepSpec(variable=var, lo=lo, hi=hi, step=step, settings=files.settings)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    result = run_sweep(files.instance, files.params, spec)
    write_sweep_outputs(result, out)
    manager = _ledger(ledger)
    if manager is not None:
        for point in result.points:
            if point.report is not None:
                manager.record(point.report, scenario=source.name, variable=var.value, value=point.value)

    table = Table(title=f"{var.value} sweep")
    table.add_column(var.value, justify="right")
    table.add_column("regime")
    table.add_column("AVs", justify="right")
    table.add_column("humans", justify="right")
    table.add_column("profit ($/h)", justify="right")
    for point in result.points:
        if point.ok:
            metrics = point.report.metrics
            table.add_row(f"{point.value:g}", point.regime.value, f"{metrics.N_A:.1f}", f"{metrics.N_H:.1f}",
                          f"{per_minute_to_hourly(point.report.profit):.2f}")
        else:
            table.add_row(f"{point.value:g}", "failed", "", "", "")
    console.print(table)
    if result.regimes.D_low is not None or result.regimes.D_high is not None:
        console.print(f"D_low = {result.regimes.D_low}, D_high = {result.regimes.D_high}")


@app.command()
def check(
    source: Path = typer.Option(..., "--in", help="Instance directory"),
    regulated: bool = typer.Option(False, "--regulated", help="Check the regulated problem"),
):
    """Validate an instance with one full solve; exits 0 only if every check passes."""
    files = read_instance(source)
    report = check_instance(files.instance, files.params, files.settings, regulated=regulated)
    table = Table(title=f"check {source.name}")
    table.add_column("check")
    table.add_column("result")
    table.add_column("detail")
    for item in report.items:
        table.add_row(item.name, "[green]pass[/green]" if item.passed else "[red]fail[/red]", item.detail)
    console.print(table)
    if not report.passed:
        raise typer.Exit(code=report.exit_code)


@app.command("ledger")
def show_ledger(
    path: Optional[Path] = typer.Option(None, "--path", help="Ledger file; defaults to MIXFLEET_LEDGER"),
    scenario: Optional[str] = typer.Option(None, "--scenario"),
    limit: int = typer.Option(20, "--limit", min=1),
):
    """List recorded runs."""
    manager = _ledger(path)
    if manager is None:
        raise click.UsageError("no ledger: pass --path or set MIXFLEET_LEDGER")
    table = Table(title="runs")
    for column in ("id", "scenario", "variable", "value", "status", "profit", "gap", "N_A", "N_H", "wage", "created_at"):
        table.add_column(column)
    for run in manager.list_runs(scenario, limit):
        table.add_row(*("" if value is None else str(value) for value in run.values()))
    console.print(table)


def run(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and map failures to exit codes: 1 usage, 2 data, 3 solver."""
    load_dotenv()
    try:
        result = app(args=argv, prog_name="mixfleet", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        return 1
    except MixfleetError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(run())
