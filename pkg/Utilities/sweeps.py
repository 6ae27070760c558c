# Utilities/sweeps.py
"""
Parameter sweeps over the AV cost D or the wage floor q_min.

Each point warm-starts the multiplier and the refine start from the previous
converged point. Failed points are recorded and the sweep moves on.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from Market.market_types import BehaviorParams, NetworkInstance
from Market.network_model import driver_supply, per_minute_to_hourly
from Solvers.pipeline import SolverSettings, solve_market
from Solvers.refiner import SolveReport
from .errors import MixfleetError

logger = logging.getLogger(__name__)

# vehicles; grid searches never return an exact zero fleet
ZERO_FLEET = 0.1
SPOT_CHECK_TOLERANCE = 0.005
FLOOR_BINDING_TOLERANCE = 0.05  # $/hour
HIRED_BINDING_TOLERANCE = 1e-3


class SweepVariable(str, Enum):
    D = "D"
    Q_MIN = "q_min"


class Regime(str, Enum):
    PURE_AV = "pure-AV"
    MIXED = "mixed"
    PURE_HUMAN = "pure-human"
    FLOOR_INACTIVE = "floor-inactive"
    FLOOR_RAISES_HIRING = "floor-raises-hiring"
    FLOOR_CUTS_HIRING = "floor-cuts-hiring"
    HUMANS_REPLACED = "humans-replaced"
    FAILED = "failed"


D_ORDER = [Regime.PURE_AV, Regime.MIXED, Regime.PURE_HUMAN]
Q_MIN_ORDER = [Regime.FLOOR_INACTIVE, Regime.FLOOR_RAISES_HIRING, Regime.FLOOR_CUTS_HIRING, Regime.HUMANS_REPLACED]


class SweepSpec(BaseModel):
    """Sweep of one variable over [lo, hi] in $/hour"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    variable: SweepVariable
    lo: float = Field(ge=0)
    hi: float
    step: float = Field(gt=0)
    settings: SolverSettings = SolverSettings()
    spot_checks: int = Field(default=3, ge=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.lo >= self.hi:
            raise ValueError(f"sweep range out of order: {self.lo} >= {self.hi}")
        if self.variable is SweepVariable.D and self.lo <= 0:
            raise ValueError("an AV cost sweep must start above 0")
        return self

    def values(self) -> np.ndarray:
        count = int(np.floor((self.hi - self.lo) / self.step + 1e-9)) + 1
        return self.lo + self.step * np.arange(count)

    def params_at(self, params: BehaviorParams, value: float) -> BehaviorParams:
        if self.variable is SweepVariable.D:
            return params.updated(D=float(value))
        return params.updated(q_min=float(value))


@dataclass(eq=False)
class SweepPoint:
    value: float
    report: Optional[SolveReport] = None
    error: Optional[str] = None
    warm: bool = False
    regime: Regime = Regime.FAILED

    @property
    def ok(self) -> bool:
        return self.report is not None and self.report.ok

    def row(self, variable: SweepVariable, zone_ids: List[int]) -> Dict[str, Any]:
        row: Dict[str, Any] = {"variable": variable.value, "value": self.value, "regime": self.regime.value}
        if not self.ok:
            row["status"] = "failed"
            row["error"] = self.error or (self.report.diagnostics if self.report else "")
            return row
        report, metrics = self.report, self.report.metrics
        row.update({
            "status": report.status.value,
            "error": "",
            "profit": per_minute_to_hourly(report.profit),
            "upper_bound": per_minute_to_hourly(report.upper_bound),
            "gap": report.gap,
            "N_A": metrics.N_A,
            "N_H": metrics.N_H,
            "fleet": metrics.N_A + metrics.N_H,
            "av_share": metrics.av_share,
            "wage": report.decision.q,
            "hire_fraction": report.decision.hire_fraction,
            "mean_fare": metrics.mean_fare,
            "mean_wait": metrics.mean_wait,
            "demand": metrics.total_demand,
            "mode_share": metrics.mode_share,
            "occupancy_av": metrics.occupancy_av,
            "occupancy_h": metrics.occupancy_h,
            "passenger_surplus": per_minute_to_hourly(metrics.passenger_surplus),
            "driver_surplus": per_minute_to_hourly(metrics.driver_surplus),
            "social_welfare": per_minute_to_hourly(metrics.social_welfare),
            "remote_human_share": metrics.remote_human_share,
            "urban_human_share": metrics.urban_human_share,
            "mu": per_minute_to_hourly(report.relaxed.best_mu),
            "warm_start": self.warm,
        })
        for zone_id, zone in zip(zone_ids, metrics.zones):
            row[f"idle_av_{zone_id}"] = zone.idle_av
            row[f"idle_h_{zone_id}"] = zone.idle_h
            row[f"w_p_{zone_id}"] = zone.w_p
            row[f"w_d_{zone_id}"] = zone.w_d
        return row


class SpotCheck(BaseModel):
    value: float
    warm_profit: float
    cold_profit: float
    relative_difference: float
    passed: bool


class RegimeReport(BaseModel):
    variable: SweepVariable
    regimes: List[str]
    order_consistent: bool
    breakpoints: Dict[str, float] = {}
    D_low: Optional[float] = None
    D_high: Optional[float] = None
    N_A_nonincreasing: Optional[bool] = None
    N_H_nondecreasing: Optional[bool] = None
    fleet_variation: Optional[float] = None
    failed_points: List[float] = []
    spot_checks: List[SpotCheck] = []


@dataclass(eq=False)
class SweepResult:
    spec: SweepSpec
    points: List[SweepPoint]
    regimes: RegimeReport
    zone_ids: List[int] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([point.row(self.spec.variable, self.zone_ids) for point in self.points])


def human_floor(params: BehaviorParams, settings: SolverSettings) -> float:
    """Humans still willing at the bottom of the wage range, plus the zero-fleet threshold"""
    return driver_supply(params.N0, settings.dual.q_lo, params.q0, params.sigma) + ZERO_FLEET


def classify_av_cost(report: SolveReport, params: BehaviorParams, settings: SolverSettings) -> Regime:
    metrics = report.metrics
    if metrics.N_A <= ZERO_FLEET:
        return Regime.PURE_HUMAN
    if metrics.N_H <= human_floor(params, settings):
        return Regime.PURE_AV
    return Regime.MIXED


def classify_wage_floor(report: SolveReport, q_min: float) -> Regime:
    """Which of hired <= willing and q >= q_min bind at this point"""
    if report.metrics.N_H <= ZERO_FLEET:
        return Regime.HUMANS_REPLACED
    if report.decision.q > q_min + FLOOR_BINDING_TOLERANCE:
        return Regime.FLOOR_INACTIVE
    if report.decision.hire_fraction >= 1.0 - HIRED_BINDING_TOLERANCE:
        return Regime.FLOOR_RAISES_HIRING
    return Regime.FLOOR_CUTS_HIRING


def _order_consistent(regimes: List[Regime], order: List[Regime]) -> bool:
    ranks = [order.index(regime) for regime in regimes if regime in order]
    return all(a <= b for a, b in zip(ranks, ranks[1:]))


def _monotone(values: np.ndarray, increasing: bool) -> bool:
    if values.size < 2:
        return True
    steps = np.diff(values) if increasing else -np.diff(values)
    slack = 0.01 * max(float(np.abs(values).max()), 1.0) + ZERO_FLEET
    return bool(np.all(steps >= -slack))


def detect_regimes(points: List[SweepPoint], spec: SweepSpec) -> RegimeReport:
    solved = [point for point in points if point.ok]
    regimes = [point.regime for point in solved]
    failed = [point.value for point in points if not point.ok]
    breakpoints: Dict[str, float] = {}
    for point in solved:
        breakpoints.setdefault(point.regime.value, point.value)

    if spec.variable is SweepVariable.D:
        pure_av = [point.value for point in solved if point.regime is Regime.PURE_AV]
        pure_human = [point.value for point in solved if point.regime is Regime.PURE_HUMAN]
        N_A = np.array([point.report.metrics.N_A for point in solved])
        N_H = np.array([point.report.metrics.N_H for point in solved])
        return RegimeReport(
            variable=spec.variable,
            regimes=[regime.value for regime in regimes],
            order_consistent=_order_consistent(regimes, D_ORDER),
            breakpoints=breakpoints,
            D_low=max(pure_av) if pure_av else None,
            D_high=min(pure_human) if pure_human else None,
            N_A_nonincreasing=_monotone(N_A, increasing=False),
            N_H_nondecreasing=_monotone(N_H, increasing=True),
            failed_points=failed,
        )

    kept = [point for point in solved if point.regime is not Regime.HUMANS_REPLACED]
    variation = None
    if kept:
        fleets = np.array([point.report.metrics.N_A + point.report.metrics.N_H for point in kept])
        variation = float((fleets.max() - fleets.min()) / fleets.mean()) if fleets.mean() > 0 else 0.0
    return RegimeReport(
        variable=spec.variable,
        regimes=[regime.value for regime in regimes],
        order_consistent=_order_consistent(regimes, Q_MIN_ORDER),
        breakpoints=breakpoints,
        fleet_variation=variation,
        failed_points=failed,
    )


def _spot_check(instance: NetworkInstance, params: BehaviorParams, spec: SweepSpec, point: SweepPoint) -> Optional[SpotCheck]:
    regulated = True if spec.variable is SweepVariable.Q_MIN else None
    try:
        cold = solve_market(instance, spec.params_at(params, point.value), spec.settings, regulated=regulated)
    except MixfleetError as exc:
        logger.warning("cold spot check at %s = %g failed: %s", spec.variable.value, point.value, exc)
        return None
    if not cold.ok:
        return None
    warm_profit = point.report.profit
    difference = abs(warm_profit - cold.profit) / max(abs(cold.profit), 1e-12)
    return SpotCheck(value=point.value, warm_profit=warm_profit, cold_profit=cold.profit,
                     relative_difference=difference, passed=difference <= SPOT_CHECK_TOLERANCE)


def sweep(instance: NetworkInstance, params: BehaviorParams, spec: SweepSpec) -> SweepResult:
    regulated = True if spec.variable is SweepVariable.Q_MIN else None
    points: List[SweepPoint] = []
    previous: Optional[SolveReport] = None
    for value in spec.values():
        value = float(value)
        point_params = spec.params_at(params, value)
        point = SweepPoint(value=value, warm=previous is not None)
        try:
            if previous is None:
                report = solve_market(instance, point_params, spec.settings, regulated=regulated)
            else:
                report = solve_market(
                    instance, point_params, spec.settings, regulated=regulated,
                    mu0=previous.relaxed.best_mu,
                    initial_decision=previous.decision.with_changes(av_flow=None),
                )
            point.report = report
        except MixfleetError as exc:
            point.error = str(exc)
        if point.ok:
            if spec.variable is SweepVariable.D:
                point.regime = classify_av_cost(point.report, point_params, spec.settings)
            else:
                point.regime = classify_wage_floor(point.report, value)
            previous = point.report
            logger.info("%s = %g: profit %.4f, N_A %.1f, N_H %.1f (%s)", spec.variable.value, value,
                        point.report.profit, point.report.metrics.N_A, point.report.metrics.N_H, point.regime.value)
        else:
            logger.warning("%s = %g failed: %s", spec.variable.value, value, point.error or "no feasible decision")
            previous = None
        points.append(point)

    regimes = detect_regimes(points, spec)
    solved = [point for point in points if point.ok]
    if solved and spec.spot_checks:
        picks = sorted({int(round(k)) for k in np.linspace(0, len(solved) - 1, spec.spot_checks)})
        checks = [_spot_check(instance, params, spec, solved[k]) for k in picks]
        regimes = regimes.model_copy(update={"spot_checks": [check for check in checks if check is not None]})
    return SweepResult(spec=spec, points=points, regimes=regimes, zone_ids=instance.zone_ids)
