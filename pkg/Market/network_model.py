# Market/network_model.py
"""
Elementary market formulas.

Every function is pure and works in minutes: demand is passengers/min, fares are
$/min of trip time and profits are $/min. Wages and the AV cost are quoted in
$/hour and converted with hourly_to_per_minute at the boundary.
"""
import logging

import numpy as np
from scipy.special import expit, softmax

from Utilities.errors import ModelDomainError
from .market_types import (
    BehaviorParams,
    Commission,
    FleetHours,
    FlowResiduals,
    MarketMetrics,
    MarketState,
    NetworkInstance,
    PlatformDecision,
    TripStats,
    ZoneSummary,
)

logger = logging.getLogger(__name__)

MINUTES_PER_HOUR = 60.0


def hourly_to_per_minute(rate):
    return rate / MINUTES_PER_HOUR


def per_minute_to_hourly(rate):
    return rate * MINUTES_PER_HOUR


def generalized_cost(alpha, w_p, r, t):
    """Passenger cost of a trip: alpha * wait + fare rate * trip time"""
    return alpha * w_p + r * t


def demand_rate(lambda0, c, c0, eps):
    """Logit share of potential passengers choosing the platform, times potential demand"""
    return lambda0 * expit(-eps * (np.asarray(c, dtype=float) - c0))


def passenger_wait(L, n_idle):
    """Square-root law wait time in minutes"""
    n_idle = np.asarray(n_idle, dtype=float)
    if np.any(n_idle <= 0):
        raise ModelDomainError("passenger wait needs a positive idle vehicle count")
    wait = L / np.sqrt(n_idle)
    return float(wait) if wait.ndim == 0 else wait


def driver_supply(N0, q, q0, sigma):
    """Logit supply of human drivers at wage q ($/hour)"""
    supply = N0 * expit(sigma * (np.asarray(q, dtype=float) - q0))
    return float(supply) if supply.ndim == 0 else supply


def fare_revenue(lam: np.ndarray, r: np.ndarray, t: np.ndarray) -> float:
    return float(np.sum(r[:, None] * lam * t))


def commission_from_wage(q: float, N_H: float, lam: np.ndarray, r: np.ndarray, t: np.ndarray) -> Commission:
    """
    Commission rate implied by paying wage q ($/hour) for N_H vehicle-hours.

    Returns:
        Commission with the rate and a flag set when the wage bill exceeds revenue
    """
    revenue = fare_revenue(np.asarray(lam, dtype=float), np.asarray(r, dtype=float), np.asarray(t, dtype=float))
    if revenue <= 0:
        raise ModelDomainError("commission is undefined without fare revenue")
    delta = 1.0 - hourly_to_per_minute(q) * N_H / revenue
    if delta < 0:
        logger.debug("wage bill exceeds fare revenue (commission %.4f)", delta)
    return Commission(delta=delta, negative=delta < 0)


def trip_stats(lam: np.ndarray, t: np.ndarray, r: np.ndarray, delta: float) -> TripStats:
    """Mean trip time and mean driver earning per trip; NaN where a zone has no outbound demand"""
    outbound = lam.sum(axis=1)
    defined = outbound > 0
    tbar = np.full(lam.shape[0], np.nan)
    tbar[defined] = (lam * t).sum(axis=1)[defined] / outbound[defined]
    ebar = (1.0 - delta) * r * tbar
    return TripStats(tbar=tbar, ebar=ebar)


def logit_probabilities(utilities: np.ndarray, eta: float) -> np.ndarray:
    """Row-wise logit; -inf utilities get probability 0, all -inf rows become uniform"""
    utilities = np.asarray(utilities, dtype=float)
    size = utilities.shape[1]
    if eta == 0:
        return np.full(utilities.shape, 1.0 / size)
    probs = np.full(utilities.shape, 1.0 / size)
    live = np.isfinite(utilities).any(axis=1)
    if np.any(live):
        probs[live] = softmax(eta * utilities[live], axis=1)
    return probs


def reposition_utilities(ebar: np.ndarray, tbar: np.ndarray, w_d: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Earning rate of staying (diagonal) or moving to another zone ($/min)"""
    defined = np.isfinite(tbar)
    with np.errstate(divide="ignore", invalid="ignore"):
        move = ebar[None, :] / (w_d[None, :] + t + tbar[None, :])
        stay = ebar / (w_d + tbar)
    utilities = np.where(defined[None, :], move, -np.inf)
    np.fill_diagonal(utilities, np.where(defined, stay, -np.inf))
    return np.where(np.isnan(utilities), -np.inf, utilities)


def reposition_probs(ebar: np.ndarray, tbar: np.ndarray, w_d: np.ndarray, t: np.ndarray, eta: float) -> np.ndarray:
    if eta < 0:
        raise ModelDomainError("repositioning sensitivity must be nonnegative")
    return logit_probabilities(reposition_utilities(ebar, tbar, w_d, t), eta)


def idle_shares(idle_h: np.ndarray, idle_av: np.ndarray):
    """Human and AV shares of idle vehicles per zone (0 where the zone has none)"""
    total = idle_h + idle_av
    human = np.divide(idle_h, total, out=np.zeros_like(total, dtype=float), where=total > 0)
    av = np.divide(idle_av, total, out=np.zeros_like(total, dtype=float), where=total > 0)
    return human, av


def human_dropoffs(lam: np.ndarray, human_share: np.ndarray) -> np.ndarray:
    """Human drivers arriving with passengers at each zone: sum_k s_k * lambda_ki"""
    return (human_share[:, None] * lam).sum(axis=0)


def human_reposition_flow(P: np.ndarray, lam: np.ndarray, idle_h: np.ndarray, idle_av: np.ndarray) -> np.ndarray:
    idle_h = np.asarray(idle_h, dtype=float)
    idle_av = np.asarray(idle_av, dtype=float)
    serving = lam.sum(axis=1) > 0
    if np.any(serving & (idle_h + idle_av <= 0)):
        zone = int(np.argmax(serving & (idle_h + idle_av <= 0)))
        raise ModelDomainError(f"zone index {zone} has demand but no idle vehicles to split")
    human_share, _ = idle_shares(idle_h, idle_av)
    return P * human_dropoffs(lam, human_share)[:, None]


def idle_split_accounting(
    lam: np.ndarray,
    t: np.ndarray,
    w_p: np.ndarray,
    idle_h: np.ndarray,
    idle_av: np.ndarray,
) -> FleetHours:
    """
    Vehicle-hour accounting by status and type.

    Pickup time is the passenger wait; w_d is returned as idle count over
    outbound demand (infinite for zones without demand).
    """
    idle_h = np.asarray(idle_h, dtype=float)
    idle_av = np.asarray(idle_av, dtype=float)
    outbound = lam.sum(axis=1)
    served = outbound > 0
    in_service = (lam * t).sum(axis=1)
    pickup = np.zeros_like(outbound)
    pickup[served] = outbound[served] * np.asarray(w_p, dtype=float)[served]
    human_share, av_share = idle_shares(idle_h, idle_av)
    w_d = np.full_like(outbound, np.inf)
    w_d[served] = (idle_h + idle_av)[served] / outbound[served]
    return FleetHours(
        in_service_h=float(np.sum(human_share * in_service)),
        pickup_h=float(np.sum(human_share * pickup)),
        idle_h=float(np.sum(idle_h)),
        in_service_a=float(np.sum(av_share * in_service)),
        pickup_a=float(np.sum(av_share * pickup)),
        idle_a=float(np.sum(idle_av)),
        w_d=w_d,
    )


def flow_balance_residuals(
    lam: np.ndarray,
    human_share: np.ndarray,
    av_share: np.ndarray,
    f_h: np.ndarray,
    f_a: np.ndarray,
) -> FlowResiduals:
    """Per-zone inflow minus outflow of each vehicle type; arrivals carry their origin share"""

    def residual(share, flow):
        inflow = (share[:, None] * lam).sum(axis=0) + flow.sum(axis=0)
        outflow = share * lam.sum(axis=1) + flow.sum(axis=1)
        return inflow - outflow

    return FlowResiduals(av=residual(av_share, f_a), human=residual(human_share, f_h))


def profit_from_terms(revenue: float, av_hours: float, paid_human_hours: float, q: float, D: float) -> float:
    """Fare revenue less AV cost and wage bill, all per minute; q and D in $/hour"""
    return revenue - hourly_to_per_minute(D) * av_hours - hourly_to_per_minute(q) * paid_human_hours


def paid_human_hours(state: MarketState, params: BehaviorParams) -> float:
    """Human vehicle-hours on the wage bill: hired hours when regulated, willing supply otherwise"""
    return state.N_H if params.regulated else state.willing_h


def platform_profit(
    decision: PlatformDecision,
    state: MarketState,
    params: BehaviorParams,
    travel_time: np.ndarray,
) -> float:
    revenue = fare_revenue(state.lam, decision.r, travel_time)
    return profit_from_terms(revenue, state.N_A, paid_human_hours(state, params), decision.q, params.D)


def passenger_surplus(instance: NetworkInstance, costs: np.ndarray, eps: float) -> float:
    """Logit log-sum surplus in $/min relative to everyone taking the outside option"""
    lam0 = instance.potential_demand
    c0 = instance.outside_cost
    mask = lam0 > 0
    logsum = np.logaddexp(-eps * costs[mask], -eps * c0[mask]) + eps * c0[mask]
    return float(np.sum(lam0[mask] / eps * logsum))


def driver_surplus(params: BehaviorParams, q: float, hired_fraction: float = 1.0) -> float:
    """Logit log-sum surplus of drivers in $/min, zero at a zero wage"""
    gain = np.logaddexp(0.0, params.sigma * (q - params.q0)) - np.logaddexp(0.0, -params.sigma * params.q0)
    return float(hired_fraction * params.N0 / params.sigma * gain / MINUTES_PER_HOUR)


def trip_costs(instance: NetworkInstance, params: BehaviorParams, r: np.ndarray, w_p: np.ndarray) -> np.ndarray:
    w_p = np.asarray(w_p, dtype=float)
    return generalized_cost(params.alpha, w_p[:, None], r[:, None], instance.travel_time)


def welfare(
    instance: NetworkInstance,
    params: BehaviorParams,
    decision: PlatformDecision,
    state: MarketState,
) -> MarketMetrics:
    """Profit, surpluses and aggregate/zone metrics of an equilibrium state"""
    profit = platform_profit(decision, state, params, instance.travel_time)
    costs = trip_costs(instance, params, decision.r, state.w_p)
    ps = passenger_surplus(instance, costs, params.eps)
    hired_fraction = 1.0
    if params.regulated and state.willing_h > 0:
        hired_fraction = min(1.0, state.N_H / state.willing_h)
    ds = driver_surplus(params, decision.q, hired_fraction)

    outbound = state.lam.sum(axis=1)
    total_demand = float(outbound.sum())
    potential = float(instance.potential_demand.sum())
    revenue = fare_revenue(state.lam, decision.r, instance.travel_time)
    served = outbound > 0
    mean_fare = revenue / total_demand if total_demand > 0 else 0.0
    mean_wait = float(np.sum(outbound[served] * state.w_p[served]) / total_demand) if total_demand > 0 else 0.0
    fleet = state.N_A + state.N_H

    human_share = state.human_share
    has_idle = state.idle_total > 0
    remote = instance.remote_mask

    def mean_share(mask):
        picked = mask & has_idle
        return float(human_share[picked].mean()) if np.any(picked) else float("nan")

    zones = []
    for k, zone in enumerate(instance.zones):
        zones.append(ZoneSummary(
            zone_id=zone.zone_id,
            label=zone.label.value,
            fare=float(decision.r[k]),
            ride_fare=float(decision.r[k] * state.tbar[k]) if np.isfinite(state.tbar[k]) else float("nan"),
            demand=float(outbound[k]),
            idle_av=float(state.idle_av[k]),
            idle_h=float(state.idle_h[k]),
            w_p=float(state.w_p[k]),
            w_d=float(state.w_d[k]),
            human_share=float(human_share[k]),
        ))

    return MarketMetrics(
        platform_profit=profit,
        total_demand=total_demand,
        potential_demand=potential,
        mode_share=total_demand / potential if potential > 0 else 0.0,
        mean_fare=mean_fare,
        mean_wait=mean_wait,
        passenger_surplus=ps,
        driver_surplus=ds,
        social_welfare=ps + ds + profit,
        N_A=state.N_A,
        N_H=state.N_H,
        av_share=state.N_A / fleet if fleet > 0 else 0.0,
        occupancy_av=state.hours.in_service_a / state.N_A if state.N_A > 0 else 0.0,
        occupancy_h=state.hours.in_service_h / state.N_H if state.N_H > 0 else 0.0,
        remote_human_share=mean_share(remote),
        urban_human_share=mean_share(~remote),
        zones=zones,
    )
