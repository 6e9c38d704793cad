# scripts/report_console.py
import logging
import math

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

logger = logging.getLogger(__name__)

# Rich console for colorful terminal output
console = Console()

MAX_ROWS = 10


def _fmt(value):
    if isinstance(value, float):
        return "-" if math.isnan(value) else f"{value:.4g}"
    if isinstance(value, (list, tuple)):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def print_records(records, title=""):
    """Render a list of dicts as a table, first MAX_ROWS rows only."""
    if title:
        console.rule(title, style="bold cyan")
    if not records:
        console.print("No records.", style="yellow")
        return
    columns = list(records[0].keys())
    table = Table(show_header=True, header_style="bold magenta")
    for col in columns:
        table.add_column(str(col))
    for record in records[:MAX_ROWS]:
        table.add_row(*[_fmt(record.get(col)) for col in columns])
    console.print(table)
    if len(records) > MAX_ROWS:
        console.print(f"… and {len(records) - MAX_ROWS} more record(s)", style="italic dim")


def print_scenario(scn, measured):
    console.rule(f"{scn.shape.upper()} SCENARIO", style="bold green")
    console.print(f"Instants: [bold]{scn.true_traj.num_instants}[/bold]  "
                  f"Stations: [bold]{scn.true_layout.num_stations}[/bold]  "
                  f"Seed: [bold]{scn.seed}[/bold]")
    console.print(f"Available entries: [bold]{int(measured.availability.sum())}[/bold] / {measured.values.size}")
    print_records(
        [{"station": m, "x": float(x), "y": float(y)} for m, (x, y) in enumerate(scn.true_layout.stations)],
        "True Stations",
    )


def print_solver_result(result):
    console.rule("SOLVER RESULT", style="bold green")
    status = "converged" if result.converged else "stopped"
    console.print(Panel.fit(
        f"stage: {result.stage}\n"
        f"coarse g: {result.coarse_mse:.4g} Hz²\n"
        f"final g: {result.final_mse:.4g} Hz²\n"
        f"outer iterations: {result.iterations} ({status})\n"
        f"skipped candidates: {result.skipped_candidates}",
        title="Summary", title_align="left",
    ))
    print_records(
        [{"station": m, "x": float(x), "y": float(y)} for m, (x, y) in enumerate(result.layout.stations)],
        "Estimated Stations",
    )


def print_run_report(report):
    print_records([{
        "run": report.run_id,
        "tracking median (m)": report.tracking_median,
        "localization median (m)": report.localization_median,
        "coarse tracking (m)": report.coarse_tracking_median,
        "final g (Hz²)": report.final_mse,
    }], f"RUN {report.run_id}")


def print_experiment_summary(reports, failures, aggregate=None):
    console.rule("EXPERIMENT SUMMARY", style="bold blue")
    print_records([
        {
            "run": r.run_id,
            "tracking (m)": r.tracking_median,
            "localization (m)": r.localization_median,
            "raw localization (m)": r.raw_localization_median,
            "g (Hz²)": r.final_mse,
        }
        for r in reports
    ], "Completed Runs")
    if failures:
        print_records([{"run": run_id, "error": error} for run_id, error in failures], "Failed Runs")
    if aggregate is not None:
        console.print(
            f"Aggregated localization error: [bold]{aggregate.mean_error_before:.3f} m[/bold] -> "
            f"[bold]{aggregate.mean_error_after:.3f} m[/bold] over {aggregate.runs} runs"
        )


def print_error(error):
    console.print(f"Error: {error}", style="bold red")
