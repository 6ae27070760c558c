# Solvers/dual_decomposition.py
"""
Upper bound on platform profit by Lagrangian relaxation.

The relaxed problem drops the equilibrium flow constraints and keeps only the
coupling between the human hours used across zones and the hours supplied at
the chosen wage. Relaxing that coupling with a multiplier mu ($/min per
vehicle) splits the problem into one subproblem per zone and one for the
wage. Every multiplier gives a valid bound; the subgradient loop drives mu
toward the tightest one.

For a fixed zone total of idle vehicles the zone Lagrangian is linear in the
AV/human split, so the optimum is all-AV when the AV cost per minute is at
most mu and all-human otherwise. The zone search therefore runs over
(fare, idle total) only.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit, logit

from Market.market_types import BehaviorParams, NetworkInstance, PlatformDecision
from Market.network_model import (
    demand_rate,
    driver_supply,
    fare_revenue,
    hourly_to_per_minute,
    idle_split_accounting,
    per_minute_to_hourly,
    trip_costs,
)
from Utilities.errors import ConfigurationError, DualDivergenceError

logger = logging.getLogger(__name__)


class DualConfig(BaseModel):
    """Multiplier schedule and search grids; mu0 and tau0 default from the instance"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    mu0: Optional[float] = None
    tau0: Optional[float] = Field(default=None, ge=0)
    max_iters: int = Field(default=2000, ge=1)
    primal_tol: float = Field(default=1e-4, gt=0)
    r_lo: float = Field(default=0.05, gt=0)
    r_hi: float = Field(default=5.0, gt=0)
    n_r: int = Field(default=50, ge=2)
    idle_cap: Optional[float] = Field(default=None, gt=0)
    n_n: int = Field(default=50, ge=2)
    q_lo: float = Field(default=1.0, gt=0)
    q_hi: float = Field(default=60.0, gt=0)
    n_q: int = Field(default=120, ge=2)
    zoom_passes: int = Field(default=3, ge=0)
    zoom_factor: float = Field(default=10.0, gt=1)
    divergence_limit: float = Field(default=1e6, gt=0)

    @model_validator(mode="after")
    def _ordered_bounds(self):
        if self.r_lo >= self.r_hi:
            raise ValueError(f"fare bounds out of order: {self.r_lo} >= {self.r_hi}")
        if self.q_lo >= self.q_hi:
            raise ValueError(f"wage bounds out of order: {self.q_lo} >= {self.q_hi}")
        return self

    def cap(self, params: BehaviorParams) -> float:
        """Per-zone idle vehicle cap; 3 L^2 unless configured"""
        return self.idle_cap if self.idle_cap is not None else 3.0 * params.L ** 2

    def wage_interval(self, q_floor: float = 0.0) -> Tuple[float, float]:
        lo = max(self.q_lo, q_floor)
        if lo > self.q_hi:
            raise ConfigurationError(
                f"wage floor {q_floor} $/h lies above the wage search range ending at {self.q_hi} $/h"
            )
        return lo, self.q_hi


class TerminationReason(Enum):
    FEASIBLE = "feasible"
    MAX_ITERS = "max-iters"


@dataclass
class ZoneChoice:
    r: float
    idle_av: float
    idle_h: float
    value: float
    revenue: float
    hours: float
    at_cap: bool = False

    @property
    def idle_total(self) -> float:
        return self.idle_av + self.idle_h

    @property
    def human_hours(self) -> float:
        return self.hours if self.idle_h > 0 else 0.0


@dataclass
class WageChoice:
    q: float
    value: float
    offered_hours: float

    @property
    def hires(self) -> bool:
        return self.offered_hours > 0


@dataclass(eq=False)
class RelaxedSolution:
    q: float
    r: np.ndarray
    idle_av: np.ndarray
    idle_h: np.ndarray
    hire_fraction: float
    upper_bound: float
    relaxed_objective: float
    residual: float
    termination: TerminationReason
    mu_trajectory: List[float]
    dual_values: List[float]
    mu_final: float
    best_mu: float
    mu0: float
    tau0: float
    iterations: int
    capped_zones: List[int] = field(default_factory=list)

    def decision(self) -> PlatformDecision:
        return PlatformDecision(q=self.q, r=self.r, idle_av=self.idle_av, hire_fraction=self.hire_fraction)

    def info(self) -> Dict[str, Any]:
        return {
            "q": self.q,
            "upper_bound": self.upper_bound,
            "relaxed_objective": self.relaxed_objective,
            "residual": self.residual,
            "termination": self.termination.value,
            "iterations": self.iterations,
            "mu0_per_hour": per_minute_to_hourly(self.mu0),
            "tau0": self.tau0,
            "mu_final_per_hour": per_minute_to_hourly(self.mu_final),
            "capped_zones": list(self.capped_zones),
        }


def zone_surfaces(
    zones: np.ndarray,
    r_grid: np.ndarray,
    n_grid: np.ndarray,
    instance: NetworkInstance,
    params: BehaviorParams,
):
    """
    Fare revenue and vehicle-hours of each zone over a (fare, idle total) grid.

    Args:
        zones: Zone indices, shape (Z,)
        r_grid: Fares per zone, shape (Z, R)
        n_grid: Idle totals per zone, shape (Z, K)

    Returns:
        (revenue, hours) each of shape (Z, R, K), in $/min and vehicles
    """
    lam0 = instance.potential_demand[zones][:, None, None, :]
    t = instance.travel_time[zones][:, None, None, :]
    c0 = instance.outside_cost[zones][:, None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        wait = np.where(n_grid > 0, params.L / np.sqrt(n_grid), np.inf)
        cost = params.alpha * wait[:, None, :, None] + r_grid[:, :, None, None] * t
        lam = lam0 * expit(-params.eps * (cost - c0))
        trips = (lam * t).sum(axis=-1)
        outbound = lam.sum(axis=-1)
        pickup = np.where(outbound > 0, outbound * wait[:, None, :], 0.0)
    revenue = r_grid[:, :, None] * trips
    hours = trips + pickup + n_grid[:, None, :]
    return revenue, hours


def _zoom_axis(center: np.ndarray, spacing: float, lo: float, hi: float, points: int, factor: float):
    step = spacing / factor
    width = step * (points - 1)
    start = np.clip(center - width / 2.0, lo, max(lo, hi - width))
    grid = np.minimum(start[:, None] + step * np.arange(points)[None, :], hi)
    return grid, step


def _shadow_cost(mu: float, params: BehaviorParams) -> Tuple[float, bool]:
    """Cost per vehicle-minute of the cheaper type and whether that type is AV (ties go to AV)"""
    av_cost = hourly_to_per_minute(params.D)
    if av_cost <= mu:
        return av_cost, True
    return mu, False


class ZoneGrids:
    """Coarse zone surfaces; they do not depend on mu and are reused across dual iterations"""

    def __init__(self, instance: NetworkInstance, params: BehaviorParams, config: DualConfig):
        self.instance = instance
        self.params = params
        self.config = config
        self.cap = config.cap(params)
        self.r_axis = np.linspace(config.r_lo, config.r_hi, config.n_r)
        self.n_axis = np.linspace(0.0, self.cap, config.n_n)
        zones = np.arange(instance.M)
        self.revenue, self.hours = zone_surfaces(
            zones,
            np.broadcast_to(self.r_axis, (instance.M, config.n_r)),
            np.broadcast_to(self.n_axis, (instance.M, config.n_n)),
            instance,
            params,
        )

    def solve(self, mu: float, zones: Optional[np.ndarray] = None) -> List[ZoneChoice]:
        config = self.config
        zones = np.arange(self.instance.M) if zones is None else np.asarray(zones)
        cost, av = _shadow_cost(mu, self.params)

        revenue = self.revenue[zones]
        hours = self.hours[zones]
        flat = (revenue - cost * hours).reshape(zones.shape[0], -1)
        pick = np.argmax(flat, axis=1)
        rows = np.arange(zones.shape[0])
        ir, ik = np.divmod(pick, config.n_n)
        best = flat[rows, pick]
        best_revenue = revenue[rows, ir, ik]
        best_hours = hours[rows, ir, ik]
        r_best = self.r_axis[ir]
        n_best = self.n_axis[ik]

        r_step = (config.r_hi - config.r_lo) / (config.n_r - 1)
        n_step = self.cap / (config.n_n - 1)
        for _ in range(config.zoom_passes):
            r_grid, r_step = _zoom_axis(r_best, r_step, config.r_lo, config.r_hi, config.n_r, config.zoom_factor)
            n_grid, n_step = _zoom_axis(n_best, n_step, 0.0, self.cap, config.n_n, config.zoom_factor)
            rev, hrs = zone_surfaces(zones, r_grid, n_grid, self.instance, self.params)
            flat = (rev - cost * hrs).reshape(zones.shape[0], -1)
            pick = np.argmax(flat, axis=1)
            jr, jk = np.divmod(pick, config.n_n)
            candidate = flat[rows, pick]
            better = candidate > best
            best = np.where(better, candidate, best)
            best_revenue = np.where(better, rev[rows, jr, jk], best_revenue)
            best_hours = np.where(better, hrs[rows, jr, jk], best_hours)
            r_best = np.where(better, r_grid[rows, jr], r_best)
            n_best = np.where(better, n_grid[rows, jk], n_best)

        choices = []
        for k in range(zones.shape[0]):
            total = float(n_best[k])
            choices.append(ZoneChoice(
                r=float(r_best[k]),
                idle_av=total if av else 0.0,
                idle_h=0.0 if av else total,
                value=float(best[k]),
                revenue=float(best_revenue[k]),
                hours=float(best_hours[k]),
                at_cap=total >= self.cap * (1.0 - 1e-12) and total > 0,
            ))
        return choices


def zone_subproblem(
    i: int,
    mu: float,
    params: BehaviorParams,
    instance: NetworkInstance,
    config: Optional[DualConfig] = None,
    grids: Optional[ZoneGrids] = None,
) -> ZoneChoice:
    """Grid-optimal fare and idle split of zone i at multiplier mu ($/min)"""
    grids = grids or ZoneGrids(instance, params, config or DualConfig())
    return grids.solve(mu, np.array([i]))[0]


def wage_value(q, mu: float, params: BehaviorParams):
    """Wage part of the Lagrangian, (mu - q) times willing supply, in $/min"""
    return (mu - hourly_to_per_minute(q)) * driver_supply(params.N0, q, params.q0, params.sigma)


def wage_subproblem(
    mu: float,
    params: BehaviorParams,
    config: Optional[DualConfig] = None,
    q_floor: float = 0.0,
    regulated: bool = False,
) -> WageChoice:
    """
    Best wage for multiplier mu on the grid over [max(q_lo, q_floor), q_hi].

    Under regulation the platform may also hire nobody, which is worth 0.
    """
    config = config or DualConfig()
    lo, hi = config.wage_interval(q_floor)
    axis = np.linspace(lo, hi, config.n_q)
    values = wage_value(axis, mu, params)
    pick = int(np.argmax(values))
    q_best, best = float(axis[pick]), float(values[pick])
    step = (hi - lo) / (config.n_q - 1)
    for _ in range(config.zoom_passes):
        if step == 0:
            break
        grid, step = _zoom_axis(np.array([q_best]), step, lo, hi, config.n_q, config.zoom_factor)
        values = wage_value(grid[0], mu, params)
        pick = int(np.argmax(values))
        if values[pick] > best:
            q_best, best = float(grid[0][pick]), float(values[pick])

    if regulated and best < 0:
        return WageChoice(q=lo, value=0.0, offered_hours=0.0)
    return WageChoice(q=q_best, value=best,
                      offered_hours=driver_supply(params.N0, q_best, params.q0, params.sigma))


def dual_update(mu: float, residual: float, tau: float, regulated: bool) -> float:
    """Subgradient step; residual is offered human hours minus used human hours"""
    updated = mu - tau * residual
    if regulated:
        updated = max(0.0, updated)
    return updated


def zone_lagrangian(
    i: int,
    r_i: float,
    idle_av_i: float,
    idle_h_i: float,
    mu: float,
    params: BehaviorParams,
    instance: NetworkInstance,
) -> float:
    total = idle_av_i + idle_h_i
    if total <= 0:
        return 0.0
    wait = params.L / math.sqrt(total)
    t = instance.travel_time[i]
    costs = params.alpha * wait + r_i * t
    lam = demand_rate(instance.potential_demand[i], costs, instance.outside_cost[i], params.eps)
    busy = float(np.sum(lam * (t + wait)))
    human = idle_h_i / total
    av_hours = (1.0 - human) * busy + idle_av_i
    human_hours = human * busy + idle_h_i
    return r_i * float(np.sum(lam * t)) - hourly_to_per_minute(params.D) * av_hours - mu * human_hours


def lagrangian(
    instance: NetworkInstance,
    params: BehaviorParams,
    q: float,
    r: np.ndarray,
    idle_av: np.ndarray,
    idle_h: np.ndarray,
    mu: float,
    offered_fraction: float = 1.0,
) -> float:
    """Whole-market Lagrangian evaluated directly from market quantities"""
    total = idle_av + idle_h
    with np.errstate(divide="ignore"):
        w_p = np.where(total > 0, params.L / np.sqrt(np.where(total > 0, total, 1.0)), np.inf)
    lam = demand_rate(instance.potential_demand, trip_costs(instance, params, r, w_p),
                      instance.outside_cost, params.eps)
    hours = idle_split_accounting(lam, instance.travel_time, w_p, idle_h, idle_av)
    offered = offered_fraction * driver_supply(params.N0, q, params.q0, params.sigma)
    revenue = fare_revenue(lam, r, instance.travel_time)
    return (
        revenue
        - hourly_to_per_minute(params.D) * hours.N_A
        - hourly_to_per_minute(q) * offered
        + mu * (offered - hours.N_H)
    )


@dataclass
class _Candidate:
    q: float
    r: np.ndarray
    idle_total: np.ndarray
    human_fraction: float
    hire_fraction: float
    objective: float


def _inverse_supply(hours: float, params: BehaviorParams) -> float:
    """Wage ($/hour) at which exactly `hours` drivers are willing to work"""
    return params.q0 + float(logit(hours / params.N0)) / params.sigma


def recover_primal(
    choices: List[ZoneChoice],
    wage: WageChoice,
    params: BehaviorParams,
    config: DualConfig,
    regulated: bool,
) -> Optional[_Candidate]:
    """
    Relaxed-feasible point built from one dual iterate.

    Zone fares and idle totals are kept; the human share is set uniformly so
    the human hours used match the hours offered, or the wage is lowered until
    the offer matches the need when the offer is larger.
    """
    r = np.array([choice.r for choice in choices])
    totals = np.array([choice.idle_total for choice in choices])
    revenue = sum(choice.revenue for choice in choices)
    need = sum(choice.hours for choice in choices)
    av_cost = hourly_to_per_minute(params.D)
    q_floor = params.q_min if (regulated and params.q_min is not None) else 0.0
    lo, _ = config.wage_interval(q_floor)
    willing = wage.offered_hours if wage.hires else 0.0

    if regulated and not wage.hires:
        return _Candidate(lo, r, totals, 0.0, 0.0, revenue - av_cost * need)
    if willing <= need:
        share = willing / need if need > 0 else 0.0
        objective = revenue - av_cost * (need - willing) - hourly_to_per_minute(wage.q) * willing
        return _Candidate(wage.q, r, totals, share, 1.0, objective)
    if need <= 0 or need >= params.N0:
        return None
    q = _inverse_supply(need, params)
    if regulated:
        q = max(q, lo)
        supply = driver_supply(params.N0, q, params.q0, params.sigma)
        return _Candidate(q, r, totals, 1.0, need / supply, revenue - hourly_to_per_minute(q) * need)
    if q < lo:
        return None
    return _Candidate(q, r, totals, 1.0, 1.0, revenue - hourly_to_per_minute(q) * need)


def run_dual(
    instance: NetworkInstance,
    params: BehaviorParams,
    config: Optional[DualConfig] = None,
    regulated: Optional[bool] = None,
) -> RelaxedSolution:
    """Subgradient descent on the dual; returns the best bound and the best relaxed-feasible point"""
    config = config or DualConfig()
    regulated = params.regulated if regulated is None else regulated
    q_floor = params.q_min if (regulated and params.q_min is not None) else 0.0
    config.wage_interval(q_floor)

    grids = ZoneGrids(instance, params, config)
    mu0 = config.mu0 if config.mu0 is not None else hourly_to_per_minute(params.D)
    if regulated:
        mu0 = max(mu0, 0.0)
    mu = mu0
    mu_scale = abs(mu0) if mu0 != 0 else hourly_to_per_minute(params.q0)
    tau0 = config.tau0

    trajectory: List[float] = []
    dual_values: List[float] = []
    best_dual, best_mu = math.inf, mu
    best_candidate: Optional[_Candidate] = None
    best_raw: Optional[Tuple[List[ZoneChoice], WageChoice]] = None
    termination = TerminationReason.MAX_ITERS
    residual = math.inf
    iterations = 0

    for iterations in range(1, config.max_iters + 1):
        choices = grids.solve(mu)
        wage = wage_subproblem(mu, params, config, q_floor, regulated)
        dual_value = sum(choice.value for choice in choices) + wage.value
        trajectory.append(mu)
        dual_values.append(dual_value)
        if dual_value < best_dual:
            best_dual, best_mu = dual_value, mu
            best_raw = (choices, wage)

        used = sum(choice.human_hours for choice in choices)
        gradient = wage.offered_hours - used
        scale = max(wage.offered_hours, used, 1.0)
        residual = gradient / scale

        candidate = recover_primal(choices, wage, params, config, regulated)
        if candidate is not None and (best_candidate is None or candidate.objective > best_candidate.objective):
            best_candidate = candidate

        raw_feasible = abs(residual) <= config.primal_tol or (regulated and mu == 0 and residual >= 0)
        certified = (
            best_candidate is not None
            and best_dual - best_candidate.objective <= config.primal_tol * max(abs(best_dual), 1e-12)
        )
        if raw_feasible or certified:
            termination = TerminationReason.FEASIBLE
            break

        if tau0 is None:
            tau0 = mu_scale / abs(gradient)
        mu = dual_update(mu, gradient, tau0 / math.sqrt(iterations), regulated)
        if abs(mu) > config.divergence_limit:
            raise DualDivergenceError(
                f"multiplier diverged to {mu:.3e} after {iterations} iterations; reduce tau0 (now {tau0:.3e})"
            )

    logger.info(
        "dual %s after %d iterations: bound %.4f $/min, mu %.3f $/h",
        termination.value, iterations, best_dual, per_minute_to_hourly(best_mu),
    )

    if best_candidate is not None:
        point = best_candidate
        idle_h = point.human_fraction * point.idle_total
        idle_av = point.idle_total - idle_h
        q, r, hire_fraction, objective = point.q, point.r, point.hire_fraction, point.objective
    else:
        choices, wage = best_raw
        r = np.array([choice.r for choice in choices])
        idle_av = np.array([choice.idle_av for choice in choices])
        idle_h = np.array([choice.idle_h for choice in choices])
        q, hire_fraction, objective = wage.q, 1.0, float("nan")

    capped = [k for k, choice in enumerate(best_raw[0]) if choice.at_cap]
    if capped:
        logger.warning("zones %s sit at the idle cap of %.0f vehicles", capped, grids.cap)

    return RelaxedSolution(
        q=float(q),
        r=r,
        idle_av=idle_av,
        idle_h=idle_h,
        hire_fraction=float(min(max(hire_fraction, 0.0), 1.0)),
        upper_bound=float(best_dual),
        relaxed_objective=float(objective),
        residual=float(residual),
        termination=termination,
        mu_trajectory=trajectory,
        dual_values=dual_values,
        mu_final=float(mu),
        best_mu=float(best_mu),
        mu0=float(mu0),
        tau0=float(tau0) if tau0 is not None else 0.0,
        iterations=iterations,
        capped_zones=capped,
    )
