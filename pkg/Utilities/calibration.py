# Utilities/calibration.py
import logging
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from Market.market_types import BehaviorParams, NetworkInstance
from Market.network_model import hourly_to_per_minute
from Solvers.pipeline import SolverSettings, solve_market
from Solvers.refiner import SolveReport
from .errors import RefineFailure
from .instance_generator import TARGET_DEMAND, TARGET_MODE_SHARE

logger = logging.getLogger(__name__)

# AV cost ($/hour) high enough that no AV is ever deployed
NO_AV_COST = 1e6

REFERENCE_DRIVERS = 3703.0
REFERENCE_WAGE = 26.2
REFERENCE_FARE = 20.5


class CalibrationTargets(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    demand: float = Field(default=TARGET_DEMAND, gt=0)
    mode_share: float = Field(default=TARGET_MODE_SHARE, gt=0, lt=1)
    demand_tolerance: float = Field(default=0.02, gt=0)
    share_tolerance: float = Field(default=0.01, gt=0)
    # bisection stops inside this share band
    share_band: float = Field(default=0.002, gt=0)
    offset_lo: float = -30.0
    offset_hi: float = 60.0
    max_bisections: int = Field(default=40, ge=1)


class CalibrationReport(BaseModel):
    demand: float
    mode_share: float
    drivers: float
    wage: float
    mean_fare: float
    profit: float
    demand_scale: float
    outside_cost_offset: float
    bisections: int
    reached: bool
    unchanged: bool
    reference_drivers: float = REFERENCE_DRIVERS
    reference_wage: float = REFERENCE_WAGE
    reference_fare: float = REFERENCE_FARE

    @property
    def deviations(self):
        """Relative deviation of drivers, wage and fare from the reference outcome"""
        return (
            self.drivers / self.reference_drivers - 1.0,
            self.wage / self.reference_wage - 1.0,
            self.mean_fare / self.reference_fare - 1.0,
        )


def _no_av_solve(instance: NetworkInstance, params: BehaviorParams, settings: SolverSettings) -> SolveReport:
    report = solve_market(instance, params, settings, regulated=False)
    if not report.ok:
        raise RefineFailure(f"no feasible no-AV equilibrium during calibration: {report.diagnostics}")
    return report


def _within(report: SolveReport, targets: CalibrationTargets) -> bool:
    metrics = report.metrics
    return (
        abs(metrics.total_demand - targets.demand) <= targets.demand_tolerance * targets.demand
        and abs(metrics.mode_share - targets.mode_share) <= targets.share_tolerance
    )


def _report(report: SolveReport, scale: float, offset: float, bisections: int, reached: bool,
            unchanged: bool) -> CalibrationReport:
    metrics = report.metrics
    return CalibrationReport(
        demand=metrics.total_demand,
        mode_share=metrics.mode_share,
        drivers=metrics.N_H,
        wage=report.decision.q,
        mean_fare=metrics.mean_fare,
        profit=report.profit,
        demand_scale=scale,
        outside_cost_offset=offset,
        bisections=bisections,
        reached=reached,
        unchanged=unchanged,
    )


def calibrate(
    instance: NetworkInstance,
    params: BehaviorParams,
    settings: Optional[SolverSettings] = None,
    targets: Optional[CalibrationTargets] = None,
) -> Tuple[NetworkInstance, CalibrationReport]:
    """
    Fit the potential-demand scale and an outside-cost offset to the target
    demand and mode share of the no-AV market.

    The potential demand is first scaled to demand / mode_share, then the
    offset added to every outside cost is bisected on the mode share.
    An instance already on target is returned as is.
    """
    targets = targets or CalibrationTargets()
    settings = settings or SolverSettings()
    if settings.dual.mu0 is None:
        settings = settings.with_mu0(hourly_to_per_minute(params.q0))
    no_av = params.updated(D=NO_AV_COST, q_min=None)

    current = _no_av_solve(instance, no_av, settings)
    if _within(current, targets):
        logger.info("instance already calibrated (demand %.2f, share %.4f)",
                    current.metrics.total_demand, current.metrics.mode_share)
        return instance, _report(current, 1.0, 0.0, 0, True, True)

    potential = instance.potential_demand.sum()
    scale = targets.demand / targets.mode_share / potential
    scaled = instance.with_demand(instance.potential_demand * scale)
    base_cost = scaled.outside_cost

    def share_at(offset: float) -> Tuple[NetworkInstance, SolveReport]:
        candidate = scaled.with_outside_cost(base_cost + offset)
        report = _no_av_solve(candidate, no_av, settings)
        logger.info("offset %+.4f: share %.4f demand %.2f", offset, report.metrics.mode_share,
                    report.metrics.total_demand)
        return candidate, report

    lo, hi = targets.offset_lo, targets.offset_hi
    lo_instance, lo_report = share_at(lo)
    hi_instance, hi_report = share_at(hi)
    bisections = 0
    if lo_report.metrics.mode_share >= targets.mode_share:
        best_instance, best, offset = lo_instance, lo_report, lo
    elif hi_report.metrics.mode_share <= targets.mode_share:
        best_instance, best, offset = hi_instance, hi_report, hi
    else:
        best_instance, best, offset = lo_instance, lo_report, lo
        while bisections < targets.max_bisections:
            bisections += 1
            mid = 0.5 * (lo + hi)
            mid_instance, mid_report = share_at(mid)
            if abs(mid_report.metrics.mode_share - targets.mode_share) < abs(best.metrics.mode_share - targets.mode_share):
                best_instance, best, offset = mid_instance, mid_report, mid
            if abs(mid_report.metrics.mode_share - targets.mode_share) <= targets.share_band:
                break
            if mid_report.metrics.mode_share < targets.mode_share:
                lo = mid
            else:
                hi = mid

    demand = best.metrics.total_demand
    if demand > 0 and abs(demand / targets.demand - 1.0) > 0.5 * targets.demand_tolerance:
        factor = targets.demand / demand
        rescaled = best_instance.with_demand(best_instance.potential_demand * factor)
        best = _no_av_solve(rescaled, no_av, settings)
        best_instance, scale = rescaled, scale * factor

    reached = _within(best, targets)
    if not reached:
        logger.warning("calibration targets not reached: demand %.2f share %.4f",
                       best.metrics.total_demand, best.metrics.mode_share)
    return best_instance, _report(best, scale, offset, bisections, reached, False)
