# Solvers/av_flow.py
import logging

import numpy as np
from scipy.optimize import linprog

from Market.market_types import NetworkInstance
from Market.network_model import idle_shares
from Utilities.errors import InternalInconsistencyError

logger = logging.getLogger(__name__)

IMBALANCE_TOLERANCE = 1e-9


def av_imbalance(lam: np.ndarray, idle_h: np.ndarray, idle_av: np.ndarray) -> np.ndarray:
    """AVs arriving with passengers minus AVs departing with passengers, per zone"""
    _, av_share = idle_shares(np.asarray(idle_h, dtype=float), np.asarray(idle_av, dtype=float))
    arrivals = (av_share[:, None] * lam).sum(axis=0)
    departures = av_share * lam.sum(axis=1)
    return arrivals - departures


def feasible_av_flow(
    instance: NetworkInstance,
    lam: np.ndarray,
    idle_h: np.ndarray,
    idle_av: np.ndarray,
) -> np.ndarray:
    """
    Cheapest AV repositioning that balances every zone.

    Zones with a surplus of AV drop-offs send empty AVs to zones with a deficit;
    the flow minimizes total repositioning time (vehicles/min times minutes).

    Returns:
        MxM nonnegative flow matrix with a zero diagonal
    """
    size = instance.M
    surplus = av_imbalance(lam, idle_h, idle_av)
    scale = max(1.0, float(np.abs(surplus).sum()), float(lam.sum()))
    if abs(surplus.sum()) > IMBALANCE_TOLERANCE * scale:
        raise InternalInconsistencyError(f"AV imbalance does not sum to zero ({surplus.sum():.3e})")
    flow = np.zeros((size, size))
    if size == 1 or np.max(np.abs(surplus)) <= 1e-15 * scale:
        return flow

    arcs = [(i, j) for i in range(size) for j in range(size) if i != j]
    cost = np.array([instance.travel_time[i, j] for i, j in arcs])
    node_arc = np.zeros((size, len(arcs)))
    for k, (i, j) in enumerate(arcs):
        node_arc[i, k] = 1.0
        node_arc[j, k] = -1.0
    # one balance row is implied by the others
    result = linprog(
        cost,
        A_eq=node_arc[:-1],
        b_eq=surplus[:-1],
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10},
    )
    if not result.success:
        raise InternalInconsistencyError(f"AV rebalancing problem failed: {result.message}")
    for k, (i, j) in enumerate(arcs):
        flow[i, j] = max(result.x[k], 0.0)

    residual = np.abs(flow.sum(axis=1) - flow.sum(axis=0) - surplus).max()
    if residual > 1e-10 * scale:
        logger.warning("AV rebalancing residual %.3e above tolerance", residual)
    return flow
