# Solvers/refiner.py
"""
Feasible platform decisions from a relaxed solution.

The search runs in the reduced space of decisions only (wage, fares, idle AVs
and, under a wage floor, the hired fraction of willing drivers); every
candidate is priced by solving its market equilibrium.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from Market.market_types import BehaviorParams, MarketMetrics, MarketState, NetworkInstance, PlatformDecision
from Market.network_model import platform_profit, welfare
from Utilities.errors import ConfigurationError, ModelDomainError, SolverError, UndefinedGapError
from .dual_decomposition import DualConfig, RelaxedSolution
from .equilibrium import EquilibriumConfig, EquilibriumResult, constraint_residuals, equilibrium_fixed_point

logger = logging.getLogger(__name__)

SEARCH_METHOD = "coordinate pattern search (replaces an interior-point refinement)"
# Accepted moves must beat the incumbent by this relative margin, above equilibrium noise
IMPROVEMENT_MARGIN = 1e-8
GAP_SLACK = 1e-9


class RefineConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_evaluations: int = Field(default=5000, ge=1)
    initial_step: float = Field(default=0.1, gt=0, le=1)
    shrink: float = Field(default=0.5, gt=0, lt=1)
    min_step: float = Field(default=1e-4, gt=0)
    regulated: Optional[bool] = None
    q_min: Optional[float] = Field(default=None, ge=0)


class SolveStatus(Enum):
    OK = "ok"
    FAILED = "failed"


def resolve_regulation(params: BehaviorParams, regulated: Optional[bool], q_min: Optional[float] = None) -> BehaviorParams:
    """Params whose q_min is set exactly when the problem is regulated"""
    if q_min is not None:
        params = params.updated(q_min=q_min)
    if regulated is None:
        return params
    if regulated and params.q_min is None:
        raise ConfigurationError("a regulated solve needs a wage floor q_min")
    if not regulated and params.q_min is not None:
        return params.updated(q_min=None)
    return params


@dataclass
class SearchBounds:
    q_lo: float
    q_hi: float
    r_lo: float
    r_hi: float
    idle_cap: float

    @classmethod
    def from_dual_config(cls, config: DualConfig, params: BehaviorParams) -> "SearchBounds":
        floor = params.q_min if params.regulated else 0.0
        q_lo, q_hi = config.wage_interval(floor)
        return cls(q_lo=q_lo, q_hi=q_hi, r_lo=config.r_lo, r_hi=config.r_hi, idle_cap=config.cap(params))

    def arrays(self, M: int, regulated: bool):
        lo = [self.q_lo] + [self.r_lo] * M + [0.0] * M
        hi = [self.q_hi] + [self.r_hi] * M + [self.idle_cap] * M
        if regulated:
            lo.append(0.0)
            hi.append(1.0)
        return np.array(lo), np.array(hi)


@dataclass(eq=False)
class EvaluationOutcome:
    feasible: bool
    profit: float
    state: Optional[MarketState] = None
    equilibrium: Optional[EquilibriumResult] = None
    cause: Optional[str] = None


@dataclass(eq=False)
class SolveReport:
    relaxed: RelaxedSolution
    upper_bound: float
    decision: PlatformDecision
    state: Optional[MarketState]
    metrics: Optional[MarketMetrics]
    profit: float
    gap: float
    evaluations: int
    infeasible_candidates: int
    accepted_moves: int
    profit_trace: List[float]
    final_step: float
    status: SolveStatus
    regulated: bool
    residuals: Dict[str, float] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    method: str = SEARCH_METHOD

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.OK

    def info(self) -> Dict[str, Any]:
        data = {
            "status": self.status.value,
            "profit": self.profit,
            "upper_bound": self.upper_bound,
            "gap": self.gap,
            "evaluations": self.evaluations,
            "infeasible_candidates": self.infeasible_candidates,
            "accepted_moves": self.accepted_moves,
            "regulated": self.regulated,
            "method": self.method,
        }
        data.update({f"relaxed_{key}": value for key, value in self.relaxed.info().items()})
        return data


def optimality_gap(R: float, R_bar: float) -> float:
    """Relative distance from profit R to the upper bound R_bar, clamped at 0"""
    if R_bar <= 0:
        raise UndefinedGapError(f"gap is undefined for a nonpositive bound ({R_bar})")
    gap = (R_bar - R) / R_bar
    if gap < 0:
        if gap < -GAP_SLACK:
            logger.warning("profit %.6g exceeds the upper bound %.6g (gap %.3e)", R, R_bar, gap)
        return 0.0
    return gap


def evaluate_decision(
    instance: NetworkInstance,
    params: BehaviorParams,
    decision: PlatformDecision,
    regulated: Optional[bool] = None,
    eq_config: Optional[EquilibriumConfig] = None,
    warm_idle_h: Optional[np.ndarray] = None,
) -> EvaluationOutcome:
    """Profit of a decision at its market equilibrium, or an infeasible marker with the cause"""
    params = resolve_regulation(params, regulated)
    if params.regulated and decision.q < params.q_min:
        return EvaluationOutcome(False, float("-inf"), cause=f"wage {decision.q:.4g} below floor {params.q_min:.4g}")
    try:
        result = equilibrium_fixed_point(instance, params, decision, eq_config, warm_idle_h)
    except (SolverError, ModelDomainError) as exc:
        return EvaluationOutcome(False, float("-inf"), cause=str(exc))
    if not result.converged:
        return EvaluationOutcome(False, float("-inf"), equilibrium=result, cause=result.cause)
    state = result.state
    if params.regulated and state.N_H > state.willing_h * (1.0 + 1e-9):
        return EvaluationOutcome(False, float("-inf"), state, result, "hired hours exceed willing supply")
    profit = platform_profit(decision, state, params, instance.travel_time)
    return EvaluationOutcome(True, profit, state, result)


def _decision_from(z: np.ndarray, M: int, regulated: bool) -> PlatformDecision:
    return PlatformDecision(
        q=z[0],
        r=z[1:M + 1],
        idle_av=z[M + 1:2 * M + 1],
        hire_fraction=z[2 * M + 1] if regulated else 1.0,
    )


def _vector_from(decision: PlatformDecision, regulated: bool) -> np.ndarray:
    parts = [[decision.q], decision.r, decision.idle_av]
    if regulated:
        parts.append([decision.hire_fraction])
    return np.concatenate([np.asarray(part, dtype=float) for part in parts])


def refine(
    instance: NetworkInstance,
    params: BehaviorParams,
    relaxed: RelaxedSolution,
    config: Optional[RefineConfig] = None,
    eq_config: Optional[EquilibriumConfig] = None,
    dual_config: Optional[DualConfig] = None,
    initial_decision: Optional[PlatformDecision] = None,
) -> SolveReport:
    """
    Coordinate pattern search from the relaxed solution.

    Coordinates are cycled in the order wage, fares by zone, idle AVs by zone
    (then the hired fraction under a wage floor). Each tries +step then -step
    and takes the first feasible improvement; a cycle without one shrinks
    every step.
    """
    config = config or RefineConfig()
    params = resolve_regulation(params, config.regulated, config.q_min)
    regulated = params.regulated
    bounds = SearchBounds.from_dual_config(dual_config or DualConfig(), params)
    M = instance.M
    lo, hi = bounds.arrays(M, regulated)
    scale = hi - lo

    start = initial_decision or relaxed.decision()
    z = np.clip(_vector_from(start, regulated), lo, hi)
    best = evaluate_decision(instance, params, _decision_from(z, M, regulated), eq_config=eq_config)
    evaluations = 1
    infeasible = 0 if best.feasible else 1
    accepted = 0
    trace = [best.profit] if best.feasible else []
    causes: Dict[str, int] = {}
    if not best.feasible:
        causes[best.cause or "unknown"] = 1

    fraction = config.initial_step
    last_fraction = fraction
    while fraction >= config.min_step and evaluations < config.max_evaluations:
        last_fraction = fraction
        improved = False
        for k in range(z.shape[0]):
            for sign in (1.0, -1.0):
                if evaluations >= config.max_evaluations:
                    break
                candidate = z.copy()
                candidate[k] = np.clip(z[k] + sign * fraction * scale[k], lo[k], hi[k])
                if candidate[k] == z[k]:
                    continue
                warm = best.equilibrium.idle_h if best.feasible and best.equilibrium is not None else None
                outcome = evaluate_decision(
                    instance, params, _decision_from(candidate, M, regulated),
                    eq_config=eq_config, warm_idle_h=warm,
                )
                evaluations += 1
                if not outcome.feasible:
                    infeasible += 1
                    causes[outcome.cause or "unknown"] = causes.get(outcome.cause or "unknown", 0) + 1
                    continue
                if not best.feasible or outcome.profit > best.profit + IMPROVEMENT_MARGIN * abs(best.profit):
                    z, best = candidate, outcome
                    accepted += 1
                    trace.append(outcome.profit)
                    improved = True
                    break
        if not improved:
            fraction *= config.shrink
        logger.debug("refine step %.2e profit %.6f evaluations %d", fraction, best.profit, evaluations)

    decision = _decision_from(z, M, regulated)
    diagnostics = {"infeasible_causes": causes, "start_feasible": bool(trace) and accepted < len(trace)}
    if not best.feasible:
        logger.warning("refine found no feasible point in %d evaluations", evaluations)
        return SolveReport(
            relaxed=relaxed, upper_bound=relaxed.upper_bound, decision=decision, state=None, metrics=None,
            profit=float("nan"), gap=float("nan"), evaluations=evaluations, infeasible_candidates=infeasible,
            accepted_moves=0, profit_trace=[], final_step=last_fraction, status=SolveStatus.FAILED,
            regulated=regulated, diagnostics=diagnostics,
        )

    decision = decision.with_changes(av_flow=best.state.f_a)
    try:
        gap = optimality_gap(best.profit, relaxed.upper_bound)
    except UndefinedGapError as exc:
        logger.warning("%s", exc)
        gap = float("nan")
    logger.info(
        "refined profit %.4f $/min, bound %.4f, gap %.4f after %d evaluations (%d accepted)",
        best.profit, relaxed.upper_bound, gap, evaluations, accepted,
    )
    return SolveReport(
        relaxed=relaxed,
        upper_bound=relaxed.upper_bound,
        decision=decision,
        state=best.state,
        metrics=welfare(instance, params, decision, best.state),
        profit=best.profit,
        gap=gap,
        evaluations=evaluations,
        infeasible_candidates=infeasible,
        accepted_moves=accepted,
        profit_trace=trace,
        final_step=last_fraction,
        status=SolveStatus.OK,
        regulated=regulated,
        residuals=constraint_residuals(instance, params, decision, best.state),
        diagnostics=diagnostics,
    )
