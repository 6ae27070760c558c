# Solvers/equilibrium.py
"""
Market equilibrium for a fixed platform decision.

The idle human drivers per zone are the fixed point of a map built from two
pieces: every zone except an anchor keeps the idle count whose human departures
with passengers match the human drivers repositioning into it, and the anchor
zone absorbs whatever remains of the driver-hour budget. The map is iterated
with damping until both flow balance and the budget hold.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import bisect
from scipy.special import expit

from Market.market_types import BehaviorParams, MarketState, NetworkInstance, PlatformDecision
from Market.network_model import (
    commission_from_wage,
    demand_rate,
    driver_supply,
    fare_revenue,
    flow_balance_residuals,
    human_dropoffs,
    idle_shares,
    idle_split_accounting,
    reposition_probs,
    trip_costs,
    trip_stats,
)
from Utilities.errors import EquilibriumError, ExistenceConditionError, InfeasibleTargetError
from .av_flow import feasible_av_flow

logger = logging.getLogger(__name__)

# Human budgets below this fraction of the driver pool are treated as no humans at all
EMPTY_BUDGET_FRACTION = 1e-12
# Consecutive iterations with a negative anchor before the decision is declared infeasible
NEGATIVE_ANCHOR_PATIENCE = 40


class EquilibriumConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_outer_iters: int = Field(default=500, ge=1)
    damping: float = Field(default=0.5, gt=0, le=1)
    tol_fp: float = Field(default=1e-8, gt=0)
    tol_bi: float = Field(default=1e-10, gt=0)
    check_existence: bool = True
    min_damping: float = Field(default=1e-3, gt=0, le=1)


class ConditionStatus(Enum):
    PASS = "pass"
    BOUNDARY = "boundary"
    FAIL = "fail"


@dataclass
class ExistenceReport:
    demand_vanishes: bool
    wait_cost_vanishes: bool
    statuses: List[ConditionStatus]
    inbound: np.ndarray
    supremum: np.ndarray
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.demand_vanishes and self.wait_cost_vanishes and all(
            status is not ConditionStatus.FAIL for status in self.statuses
        )

    @property
    def strict(self) -> bool:
        return self.passed and all(status is ConditionStatus.PASS for status in self.statuses)

    def info(self) -> Dict[str, Any]:
        return {
            "demand_vanishes": self.demand_vanishes,
            "wait_cost_vanishes": self.wait_cost_vanishes,
            "zones": [status.value for status in self.statuses],
            "passed": self.passed,
            "notes": list(self.notes),
        }


@dataclass(eq=False)
class MarketSnapshot:
    """All endogenous quantities induced by one idle-human vector"""
    idle_h: np.ndarray
    lam: np.ndarray
    w_p: np.ndarray
    w_d: np.ndarray
    human_share: np.ndarray
    av_share: np.ndarray
    delta: float
    commission_negative: bool
    tbar: np.ndarray
    ebar: np.ndarray
    P: np.ndarray
    dropoffs: np.ndarray
    f_h: np.ndarray
    inbound: np.ndarray
    busy_h: float
    budget: float

    @property
    def departures(self) -> np.ndarray:
        """Human drivers leaving each zone with a passenger"""
        return self.human_share * self.lam.sum(axis=1)


@dataclass(eq=False)
class EquilibriumResult:
    state: Optional[MarketState]
    converged: bool
    iterations: int
    max_residual: float
    residual_history: List[float]
    existence: Optional[ExistenceReport]
    idle_h: np.ndarray
    anchor: int
    damping: float
    cause: Optional[str] = None

    def raise_for_status(self) -> "EquilibriumResult":
        if not self.converged:
            raise EquilibriumError(self.cause or "equilibrium did not converge", self.residual_history)
        return self

    def info(self) -> Dict[str, Any]:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "max_residual": self.max_residual,
            "anchor": self.anchor,
            "damping": self.damping,
            "cause": self.cause,
        }


def willing_supply(params: BehaviorParams, q: float) -> float:
    return driver_supply(params.N0, q, params.q0, params.sigma)


def human_budget(params: BehaviorParams, decision: PlatformDecision) -> float:
    """Human vehicle-hours the platform pays for under this decision"""
    supply = willing_supply(params, decision.q)
    if params.regulated:
        supply *= decision.hire_fraction
    if supply <= EMPTY_BUDGET_FRACTION * params.N0:
        return 0.0
    return supply


def anchor_zone(instance: NetworkInstance) -> int:
    return int(np.argmax(instance.outbound_potential))


def market_snapshot(
    instance: NetworkInstance,
    params: BehaviorParams,
    decision: PlatformDecision,
    idle_h: np.ndarray,
    budget: Optional[float] = None,
) -> MarketSnapshot:
    if budget is None:
        budget = human_budget(params, decision)
    t = instance.travel_time
    x = np.where(instance.active_zones, np.maximum(np.asarray(idle_h, dtype=float), 0.0), 0.0)
    total = decision.idle_av + x
    stocked = total > 0
    w_p = np.full(instance.M, np.inf)
    w_p[stocked] = params.L / np.sqrt(total[stocked])
    lam = demand_rate(instance.potential_demand, trip_costs(instance, params, decision.r, w_p),
                      instance.outside_cost, params.eps)
    human_share, av_share = idle_shares(x, decision.idle_av)

    if fare_revenue(lam, decision.r, t) > 0:
        delta, negative = commission_from_wage(decision.q, budget, lam, decision.r, t)
    else:
        delta, negative = 0.0, False
    stats = trip_stats(lam, t, decision.r, delta)

    outbound = lam.sum(axis=1)
    served = outbound > 0
    w_d = np.full(instance.M, np.inf)
    w_d[served] = total[served] / outbound[served]
    P = reposition_probs(stats.ebar, stats.tbar, w_d, t, params.eta)

    dropoffs = human_dropoffs(lam, human_share)
    f_h = P * dropoffs[:, None]
    busy = (lam * t).sum(axis=1)
    busy[served] += outbound[served] * w_p[served]
    return MarketSnapshot(
        idle_h=x,
        lam=lam,
        w_p=w_p,
        w_d=w_d,
        human_share=human_share,
        av_share=av_share,
        delta=float(delta),
        commission_negative=bool(negative),
        tbar=stats.tbar,
        ebar=stats.ebar,
        P=P,
        dropoffs=dropoffs,
        f_h=f_h,
        inbound=f_h.sum(axis=0),
        busy_h=float(np.sum(human_share * busy)),
        budget=float(budget),
    )


def human_departures(
    x: np.ndarray,
    zones: np.ndarray,
    instance: NetworkInstance,
    params: BehaviorParams,
    decision: PlatformDecision,
) -> np.ndarray:
    """Human departures with passengers from each of `zones` if it held x idle humans"""
    x = np.asarray(x, dtype=float)
    total = decision.idle_av[zones] + x
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(total > 0, x / total, 0.0)
        wait = np.where(total > 0, params.L / np.sqrt(total), np.inf)
    costs = params.alpha * wait[:, None] + decision.r[zones, None] * instance.travel_time[zones]
    gap = costs - instance.outside_cost[zones]
    served = instance.potential_demand[zones] * expit(-params.eps * gap)
    return share * served.sum(axis=1)


def _bisect_zones(
    targets: np.ndarray,
    zones: np.ndarray,
    upper: float,
    instance: NetworkInstance,
    params: BehaviorParams,
    decision: PlatformDecision,
    tol: float,
):
    """Vectorized bisection of human_departures(x) = target on [0, upper] for several zones"""
    # scipy.optimize.bisect is scalar-only; this steps every zone's bracket at once
    lo = np.zeros(zones.shape[0])
    hi = np.full(zones.shape[0], upper)
    supremum = human_departures(hi, zones, instance, params, decision)
    clipped = targets > supremum
    steps = int(np.ceil(np.log2(max(upper, tol) / tol))) + 1
    for _ in range(min(steps, 200)):
        mid = 0.5 * (lo + hi)
        above = human_departures(mid, zones, instance, params, decision) >= targets
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    roots = 0.5 * (lo + hi)
    roots = np.where(targets <= 0, 0.0, roots)
    roots = np.where(clipped, upper, roots)
    return roots, clipped


def solve_idle_scalar(
    i: int,
    inbound_flow_target: float,
    decision: PlatformDecision,
    params: BehaviorParams,
    instance: NetworkInstance,
    config: Optional[EquilibriumConfig] = None,
) -> float:
    """
    Idle human count in zone i whose passenger departures match a target inflow.

    Args:
        i: Zone index
        inbound_flow_target: Human drivers repositioning into zone i (vehicles/min)

    Returns:
        The unique root on [0, N0*F_d(q)]
    """
    config = config or EquilibriumConfig()
    if inbound_flow_target <= 0:
        return 0.0
    upper = willing_supply(params, decision.q)
    zone = np.array([i])

    def excess(x: float) -> float:
        return float(human_departures(np.array([x]), zone, instance, params, decision)[0]) - inbound_flow_target

    top = excess(upper)
    if top < 0:
        raise InfeasibleTargetError(
            f"zone index {i} cannot absorb inflow {inbound_flow_target:.6g}/min "
            f"(supremum {top + inbound_flow_target:.6g}/min)"
        )
    if top == 0:
        return upper
    return float(bisect(excess, 0.0, upper, xtol=config.tol_bi, maxiter=400))


def check_existence_conditions(
    instance: NetworkInstance,
    params: BehaviorParams,
    decision: PlatformDecision,
) -> ExistenceReport:
    """
    Existence report for the human idle equilibrium.

    The logit demand and square-root wait make the two limit conditions hold
    for every instance. The flow condition is evaluated per zone with the whole
    human budget idle in that zone.
    """
    budget = human_budget(params, decision)
    statuses = []
    inbound = np.zeros(instance.M)
    supremum = np.zeros(instance.M)
    for i in range(instance.M):
        x = np.zeros(instance.M)
        x[i] = budget
        snapshot = market_snapshot(instance, params, decision, x, budget)
        inbound[i] = snapshot.inbound[i]
        supremum[i] = snapshot.departures[i]
        if inbound[i] > supremum[i] * (1.0 + 1e-12):
            statuses.append(ConditionStatus.FAIL)
        elif inbound[i] >= supremum[i] * (1.0 - 1e-12):
            statuses.append(ConditionStatus.BOUNDARY)
        else:
            statuses.append(ConditionStatus.PASS)
    notes = ["demand share vanishes as cost grows (logit)", "wait cost vanishes as idle supply grows (square-root law)"]
    if budget == 0:
        notes.append("no human budget; the equilibrium is human-free")
    return ExistenceReport(
        demand_vanishes=True,
        wait_cost_vanishes=True,
        statuses=statuses,
        inbound=inbound,
        supremum=supremum,
        notes=notes,
    )


def assemble_state(
    instance: NetworkInstance,
    params: BehaviorParams,
    decision: PlatformDecision,
    snapshot: MarketSnapshot,
    f_a: Optional[np.ndarray] = None,
) -> MarketState:
    """Complete a converged snapshot with AV flows and vehicle-hour totals"""
    if f_a is None:
        f_a = feasible_av_flow(instance, snapshot.lam, snapshot.idle_h, decision.idle_av)
    hours = idle_split_accounting(snapshot.lam, instance.travel_time, snapshot.w_p,
                                  snapshot.idle_h, decision.idle_av)
    return MarketState(
        lam=snapshot.lam,
        w_p=snapshot.w_p,
        w_d=hours.w_d,
        idle_h=snapshot.idle_h,
        idle_av=decision.idle_av.copy(),
        f_h=snapshot.f_h,
        f_a=f_a,
        N_A=hours.N_A,
        N_H=hours.N_H,
        delta=snapshot.delta,
        ebar=snapshot.ebar,
        tbar=snapshot.tbar,
        P=snapshot.P,
        willing_h=willing_supply(params, decision.q),
        hired_h=snapshot.budget,
        hours=hours,
        commission_negative=snapshot.commission_negative,
    )


class MarketEquilibrium:
    """Damped fixed-point solver for one decision; not shared between threads"""

    def __init__(
        self,
        instance: NetworkInstance,
        params: BehaviorParams,
        decision: PlatformDecision,
        config: Optional[EquilibriumConfig] = None,
    ):
        if decision.M != instance.M:
            raise ValueError(f"decision has {decision.M} zones, instance has {instance.M}")
        self.instance = instance
        self.params = params
        self.decision = decision
        self.config = config or EquilibriumConfig()
        self.budget = human_budget(params, decision)
        self.active = instance.active_zones
        self.anchor = anchor_zone(instance)
        self.others = np.flatnonzero(self.active & (np.arange(instance.M) != self.anchor))

    def initial_iterate(self) -> np.ndarray:
        weights = np.where(self.active, self.instance.outbound_potential, 0.0)
        x = np.zeros(self.instance.M)
        if weights.sum() > 0:
            x = 0.5 * self.budget * weights / weights.sum()
        else:
            x[self.anchor] = self.budget
        return x

    def _warm_iterate(self, idle_h: np.ndarray) -> np.ndarray:
        x = np.asarray(idle_h, dtype=float).copy()
        floor = 1e-9 * self.budget
        x = np.where(self.active, np.maximum(x, floor), 0.0)
        if not np.any(self.active):
            x = self.initial_iterate()
        return x

    def snapshot(self, idle_h: np.ndarray) -> MarketSnapshot:
        return market_snapshot(self.instance, self.params, self.decision, idle_h, self.budget)

    def residuals(self, snapshot: MarketSnapshot):
        """Relative flow-balance and driver-hour residuals of a snapshot"""
        flow_scale = max(float(snapshot.dropoffs.sum()), 1e-300)
        balance = np.abs(snapshot.inbound - snapshot.departures)[self.active]
        balance_residual = float(balance.max()) / flow_scale if balance.size else 0.0
        hours = snapshot.busy_h + float(snapshot.idle_h.sum())
        budget_residual = abs(self.budget - hours) / self.budget
        return balance_residual, budget_residual

    def apply_map(self, snapshot: MarketSnapshot):
        """One application of the fixed-point map; returns the image and zones clipped at the bracket top"""
        image = np.zeros(self.instance.M)
        clipped = np.zeros(self.instance.M, dtype=bool)
        if self.others.size:
            roots, hit = _bisect_zones(
                snapshot.inbound[self.others], self.others, self.budget,
                self.instance, self.params, self.decision, self.config.tol_bi,
            )
            image[self.others] = roots
            clipped[self.others] = hit
        rest = float(snapshot.idle_h.sum() - snapshot.idle_h[self.anchor])
        image[self.anchor] = max(self.budget - snapshot.busy_h - rest, -self.budget)
        return image, clipped

    def _human_free(self) -> EquilibriumResult:
        x = np.zeros(self.instance.M)
        if np.any(self.active) and not np.any(self.decision.idle_av > 0):
            return EquilibriumResult(
                state=None, converged=False, iterations=0, max_residual=float("inf"),
                residual_history=[], existence=None, idle_h=x, anchor=self.anchor,
                damping=self.config.damping, cause="no vehicles: no human budget and no idle AVs",
            )
        state = assemble_state(self.instance, self.params, self.decision, self.snapshot(x))
        return EquilibriumResult(
            state=state, converged=True, iterations=0, max_residual=0.0, residual_history=[0.0],
            existence=None, idle_h=x, anchor=self.anchor, damping=self.config.damping,
        )

    def solve(self, initial_idle_h: Optional[np.ndarray] = None) -> EquilibriumResult:
        if self.budget == 0:
            return self._human_free()

        existence = None
        if self.config.check_existence:
            existence = check_existence_conditions(self.instance, self.params, self.decision)
            if not existence.passed:
                failing = [k for k, status in enumerate(existence.statuses) if status is ConditionStatus.FAIL]
                raise ExistenceConditionError(f"inflow condition fails in zone indices {failing}")

        x = self.initial_iterate() if initial_idle_h is None else self._warm_iterate(initial_idle_h)
        theta = self.config.damping
        history: List[float] = []
        rises = 0
        negative_streak = 0
        converged = False
        cause = None
        snapshot = None
        iterations = 0
        for iterations in range(1, self.config.max_outer_iters + 1):
            snapshot = self.snapshot(x)
            residual = max(self.residuals(snapshot))
            history.append(residual)
            if residual <= self.config.tol_fp and np.all(x[self.active] > 0):
                converged = True
                break
            if len(history) > 1 and residual > history[-2]:
                rises += 1
                if rises >= 2:
                    theta = max(theta / 2.0, self.config.min_damping)
                    rises = 0
                    logger.debug("residual rising, damping reduced to %.4g", theta)
            else:
                rises = 0

            image, clipped = self.apply_map(snapshot)
            if np.any(clipped):
                cause = f"inflow exceeds what zone indices {np.flatnonzero(clipped).tolist()} can absorb"
            x = (1.0 - theta) * x + theta * image
            x[~self.active] = 0.0
            negative_streak = negative_streak + 1 if x[self.anchor] < 0 else 0
            if negative_streak >= NEGATIVE_ANCHOR_PATIENCE:
                cause = "driver-hour budget cannot absorb the idle hours other zones require"
                break
            logger.debug("iteration %d residual %.3e", iterations, residual)

        if not converged:
            cause = cause or f"no convergence within {self.config.max_outer_iters} iterations"
            logger.debug("equilibrium failed: %s (last residual %.3e)", cause, history[-1])
            return EquilibriumResult(
                state=None, converged=False, iterations=iterations, max_residual=history[-1],
                residual_history=history, existence=existence, idle_h=x, anchor=self.anchor,
                damping=theta, cause=cause,
            )

        state = assemble_state(self.instance, self.params, self.decision, snapshot)
        return EquilibriumResult(
            state=state, converged=True, iterations=iterations, max_residual=history[-1],
            residual_history=history, existence=existence, idle_h=snapshot.idle_h,
            anchor=self.anchor, damping=theta,
        )


def equilibrium_fixed_point(
    instance: NetworkInstance,
    params: BehaviorParams,
    decision: PlatformDecision,
    config: Optional[EquilibriumConfig] = None,
    initial_idle_h: Optional[np.ndarray] = None,
) -> EquilibriumResult:
    return MarketEquilibrium(instance, params, decision, config).solve(initial_idle_h)


def _wait_residual(w_p: np.ndarray, idle_total: np.ndarray, L: float) -> float:
    """Relative gap between stored passenger waits and the square-root law of the idle split"""
    stocked = idle_total > 0
    if not np.any(stocked):
        return 0.0
    implied = L / np.sqrt(idle_total[stocked])
    return float(np.max(np.abs(w_p[stocked] - implied) / implied))


def constraint_residuals(
    instance: NetworkInstance,
    params: BehaviorParams,
    decision: PlatformDecision,
    state: MarketState,
) -> Dict[str, float]:
    """Relative residual of every equilibrium constraint for a completed state"""
    tiny = 1e-300
    t = instance.travel_time
    costs = trip_costs(instance, params, decision.r, state.w_p)
    expected = demand_rate(instance.potential_demand, costs, instance.outside_cost, params.eps)
    demand_scale = max(float(instance.potential_demand.max(initial=0.0)), tiny)
    outbound = state.lam.sum(axis=1)
    served = outbound > 0

    waits = np.abs(state.idle_total[served] - state.w_d[served] * outbound[served])
    human_share, av_share = idle_shares(state.idle_h, state.idle_av)
    dropoffs = human_dropoffs(state.lam, human_share)
    flow_scale = max(float(outbound.sum()), tiny)
    balance = flow_balance_residuals(state.lam, human_share, av_share, state.f_h, state.f_a)
    hours = idle_split_accounting(state.lam, t, state.w_p, state.idle_h, state.idle_av)
    hour_scale = max(state.hired_h, tiny)

    return {
        "demand": float(np.max(np.abs(state.lam - expected))) / demand_scale,
        "passenger_wait": _wait_residual(state.w_p, state.idle_total, params.L),
        "vehicle_wait": float(waits.max(initial=0.0)) / max(float(state.idle_total.sum()), tiny),
        "human_flow": float(np.max(np.abs(state.f_h - state.P * dropoffs[:, None]))) / flow_scale,
        "human_balance": float(np.max(np.abs(balance.human))) / flow_scale,
        "av_balance": float(np.max(np.abs(balance.av))) / flow_scale,
        "driver_hours": abs(state.hired_h - hours.N_H) / hour_scale if state.hired_h > 0 else hours.N_H,
        "av_hours": abs(state.N_A - hours.N_A) / max(state.N_A, 1.0),
    }
