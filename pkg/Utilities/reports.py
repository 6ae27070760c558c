# Utilities/reports.py
import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd

from Market.network_model import per_minute_to_hourly
from Solvers.refiner import SolveReport
from .sweeps import SweepResult

logger = logging.getLogger(__name__)

SOLUTION_FILE = "solution.csv"
SUMMARY_FILE = "summary.csv"
SWEEP_FILE = "sweep.csv"
REGIMES_FILE = "regimes.json"

SOLUTION_UNITS = "fare r in $/min of trip, idle vehicles in vehicles, waits in min, demand in pax/min"
SUMMARY_UNITS = "profit, bound, welfare and wage in $/hour; fleets in vehicles; demand in pax/min"
SWEEP_NOTE = (
    "synthetic instance; per-zone curves are not comparable with the surveyed city data, "
    "only regime structure and aggregates are"
)


def _write(path: Path, frame: pd.DataFrame, *comments: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        for comment in comments:
            handle.write(f"# {comment}\n")
        frame.to_csv(handle, index=False, lineterminator="\n")
    return path


def solution_frame(report: SolveReport) -> pd.DataFrame:
    rows = []
    for zone in report.metrics.zones:
        rows.append({
            "zone_id": zone.zone_id,
            "label": zone.label,
            "r": zone.fare,
            "idle_av": zone.idle_av,
            "idle_h": zone.idle_h,
            "w_p": zone.w_p,
            "w_d": zone.w_d,
            "human_share": zone.human_share,
            "demand": zone.demand,
            "ride_fare": zone.ride_fare,
        })
    return pd.DataFrame(rows)


def summary_row(report: SolveReport) -> Dict[str, Any]:
    row: Dict[str, Any] = {
        "status": report.status.value,
        "profit": per_minute_to_hourly(report.profit),
        "upper_bound": per_minute_to_hourly(report.upper_bound),
        "gap": report.gap,
        "wage": report.decision.q,
        "hire_fraction": report.decision.hire_fraction,
        "mu": per_minute_to_hourly(report.relaxed.best_mu),
        "dual_iterations": report.relaxed.iterations,
        "dual_termination": report.relaxed.termination.value,
        "evaluations": report.evaluations,
        "regulated": report.regulated,
    }
    metrics = report.metrics
    if metrics is not None:
        row.update({
            "N_A": metrics.N_A,
            "N_H": metrics.N_H,
            "demand": metrics.total_demand,
            "mode_share": metrics.mode_share,
            "mean_fare": metrics.mean_fare,
            "mean_wait": metrics.mean_wait,
            "passenger_surplus": per_minute_to_hourly(metrics.passenger_surplus),
            "driver_surplus": per_minute_to_hourly(metrics.driver_surplus),
            "welfare": per_minute_to_hourly(metrics.social_welfare),
        })
    return row


def write_solve_outputs(report: SolveReport, directory: Union[str, Path]) -> Dict[str, Path]:
    """summary.csv always; solution.csv when a feasible decision was found"""
    directory = Path(directory)
    written = {"summary": _write(directory / SUMMARY_FILE, pd.DataFrame([summary_row(report)]), SUMMARY_UNITS)}
    if report.metrics is not None:
        written["solution"] = _write(directory / SOLUTION_FILE, solution_frame(report), SOLUTION_UNITS)
    logger.info("wrote %s", ", ".join(str(path) for path in written.values()))
    return written


def write_sweep_outputs(result: SweepResult, directory: Union[str, Path]) -> Dict[str, Path]:
    directory = Path(directory)
    sweep_path = _write(directory / SWEEP_FILE, result.frame(), SWEEP_NOTE,
                        SUMMARY_UNITS + "; sweep value in $/hour")
    regimes_path = directory / REGIMES_FILE
    payload = {"note": SWEEP_NOTE, **result.regimes.model_dump(mode="json")}
    regimes_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %s and %s", sweep_path, regimes_path)
    return {"sweep": sweep_path, "regimes": regimes_path}
