# Utilities/validation.py
import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from Market.market_types import BehaviorParams, NetworkInstance
from Solvers.equilibrium import check_existence_conditions
from Solvers.pipeline import SolverSettings, solve_market
from .errors import ConfigurationError, InstanceDataError, MixfleetError

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-6
BOUND_SLACK = 1e-6
MAX_TRAVEL_MINUTES = 600.0
MAX_OD_DEMAND = 1e4  # pax/min


class CheckItem(BaseModel):
    name: str
    passed: bool
    detail: str = ""
    exit_code: int = 0


class ValidationReport(BaseModel):
    items: List[CheckItem] = []

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    @property
    def exit_code(self) -> int:
        return max((item.exit_code for item in self.items if not item.passed), default=0)

    def add(self, name: str, passed: bool, detail: str = "", exit_code: int = 0) -> CheckItem:
        item = CheckItem(name=name, passed=passed, detail=detail, exit_code=0 if passed else exit_code)
        self.items.append(item)
        if not passed:
            logger.warning("check %s failed: %s", name, detail)
        return item


def unit_problems(instance: NetworkInstance, params: BehaviorParams, settings: SolverSettings) -> List[str]:
    """Inputs that look like they were given in the wrong units"""
    problems = []
    if not settings.dual.q_lo <= params.q0 <= settings.dual.q_hi:
        problems.append(f"q0 = {params.q0} lies outside the wage range "
                        f"[{settings.dual.q_lo}, {settings.dual.q_hi}] $/hour")
    arcs = instance.potential_demand > 0
    if np.any(instance.travel_time[arcs] > MAX_TRAVEL_MINUTES):
        problems.append(f"travel times above {MAX_TRAVEL_MINUTES:.0f} min; expected minutes")
    if np.any(instance.potential_demand > MAX_OD_DEMAND):
        problems.append(f"OD demand above {MAX_OD_DEMAND:.0f} pax/min; expected passengers per minute")
    if instance.potential_demand.sum() <= 0:
        problems.append("no potential demand anywhere")
    return problems


def check(
    instance: NetworkInstance,
    params: BehaviorParams,
    settings: Optional[SolverSettings] = None,
    regulated: Optional[bool] = None,
) -> ValidationReport:
    """Configuration, units, one full solve, its existence conditions and constraint residuals"""
    settings = settings or SolverSettings()
    report = ValidationReport()
    regulated = params.regulated if regulated is None else regulated

    try:
        settings.dual.wage_interval(params.q_min if regulated and params.q_min is not None else 0.0)
        report.add("configuration", True)
    except ConfigurationError as exc:
        report.add("configuration", False, str(exc), exc.exit_code)
        return report

    problems = unit_problems(instance, params, settings)
    report.add("units", not problems, "; ".join(problems), InstanceDataError.exit_code)

    try:
        solved = solve_market(instance, params, settings, regulated=regulated)
    except MixfleetError as exc:
        report.add("solve", False, str(exc), exc.exit_code)
        return report
    if not solved.ok:
        report.add("solve", False, f"no feasible decision: {solved.diagnostics}", 3)
        return report
    report.add("solve", True, f"profit {solved.profit:.4f} $/min, gap {solved.gap:.4g}")

    if instance.potential_demand.sum() > 0 and solved.state.N_H > 0:
        existence = check_existence_conditions(instance, params, solved.decision)
        report.add("existence", existence.passed, "; ".join(existence.notes), 3)

    worst = max(solved.residuals.values(), default=0.0)
    failing = {name: value for name, value in solved.residuals.items() if value > RESIDUAL_TOLERANCE}
    report.add("residuals", not failing, f"max {worst:.3e}" + (f", failing {failing}" if failing else ""), 3)

    bounded = solved.profit <= solved.upper_bound + BOUND_SLACK * abs(solved.upper_bound)
    report.add("bound", bounded, f"profit {solved.profit:.6g} vs bound {solved.upper_bound:.6g}", 3)
    return report
