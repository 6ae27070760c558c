# Solvers/pipeline.py
import dataclasses
import logging
from typing import Any, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from Market.market_types import BehaviorParams, FleetHours, MarketState, NetworkInstance, PlatformDecision
from Market.network_model import hourly_to_per_minute, welfare
from Utilities.errors import ConfigurationError
from .dual_decomposition import DualConfig, RelaxedSolution, TerminationReason, run_dual
from .equilibrium import EquilibriumConfig
from .refiner import RefineConfig, SolveReport, SolveStatus, refine, resolve_regulation

logger = logging.getLogger(__name__)

# flat params.json key -> (section, field)
OVERRIDE_KEYS = {
    "max_outer_iters": ("equilibrium", "max_outer_iters"),
    "damping": ("equilibrium", "damping"),
    "tol_fp": ("equilibrium", "tol_fp"),
    "tol_bi": ("equilibrium", "tol_bi"),
    "mu0": ("dual", "mu0"),
    "tau0": ("dual", "tau0"),
    "max_dual_iters": ("dual", "max_iters"),
    "primal_tol": ("dual", "primal_tol"),
    "r_lo": ("dual", "r_lo"),
    "r_hi": ("dual", "r_hi"),
    "n_r": ("dual", "n_r"),
    "idle_cap": ("dual", "idle_cap"),
    "n_n": ("dual", "n_n"),
    "q_lo": ("dual", "q_lo"),
    "q_hi": ("dual", "q_hi"),
    "n_q": ("dual", "n_q"),
    "zoom_passes": ("dual", "zoom_passes"),
    "zoom_factor": ("dual", "zoom_factor"),
    "max_evaluations": ("refine", "max_evaluations"),
    "initial_step": ("refine", "initial_step"),
    "shrink": ("refine", "shrink"),
    "min_step": ("refine", "min_step"),
}


class SolverSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    equilibrium: EquilibriumConfig = EquilibriumConfig()
    dual: DualConfig = DualConfig()
    refine: RefineConfig = RefineConfig()

    @classmethod
    def from_overrides(cls, overrides: Optional[Dict[str, Any]] = None) -> "SolverSettings":
        """Settings from flat file keys; mu0 is given in $/hour"""
        sections: Dict[str, Dict[str, Any]] = {"equilibrium": {}, "dual": {}, "refine": {}}
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key not in OVERRIDE_KEYS:
                raise ConfigurationError(f"unknown solver setting '{key}'")
            section, name = OVERRIDE_KEYS[key]
            sections[section][name] = hourly_to_per_minute(value) if key == "mu0" else value
        try:
            return cls(
                equilibrium=EquilibriumConfig(**sections["equilibrium"]),
                dual=DualConfig(**sections["dual"]),
                refine=RefineConfig(**sections["refine"]),
            )
        except ValidationError as exc:
            raise ConfigurationError(f"invalid solver settings: {exc}") from exc

    def with_mu0(self, mu0: Optional[float]) -> "SolverSettings":
        """Copy with the dual warm start replaced ($/min)"""
        if mu0 is None:
            return self
        return self.model_copy(update={"dual": self.dual.model_copy(update={"mu0": mu0})})


def empty_market_report(instance: NetworkInstance, params: BehaviorParams, dual: DualConfig) -> SolveReport:
    """Report for a market with no potential demand, which the platform does not enter"""
    M = instance.M
    floor = params.q_min if params.regulated else 0.0
    q, _ = dual.wage_interval(floor)
    decision = PlatformDecision(q=q, r=np.full(M, dual.r_lo), idle_av=np.zeros(M),
                                av_flow=np.zeros((M, M)), hire_fraction=0.0)
    zeros = np.zeros(M)
    state = MarketState(
        lam=np.zeros((M, M)),
        w_p=np.full(M, np.inf),
        w_d=np.full(M, np.inf),
        idle_h=zeros.copy(),
        idle_av=zeros.copy(),
        f_h=np.zeros((M, M)),
        f_a=np.zeros((M, M)),
        N_A=0.0,
        N_H=0.0,
        delta=0.0,
        ebar=np.full(M, np.nan),
        tbar=np.full(M, np.nan),
        P=np.full((M, M), 1.0 / M),
        willing_h=0.0,
        hired_h=0.0,
        hours=FleetHours(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, np.full(M, np.inf)),
    )
    metrics = welfare(instance, params, decision, state)
    metrics = dataclasses.replace(metrics, driver_surplus=0.0, social_welfare=metrics.passenger_surplus)
    relaxed = RelaxedSolution(
        q=q, r=decision.r, idle_av=zeros.copy(), idle_h=zeros.copy(), hire_fraction=0.0,
        upper_bound=0.0, relaxed_objective=0.0, residual=0.0, termination=TerminationReason.FEASIBLE,
        mu_trajectory=[], dual_values=[], mu_final=0.0, best_mu=0.0, mu0=0.0, tau0=0.0, iterations=0,
    )
    logger.info("no potential demand; the platform stays out of the market")
    return SolveReport(
        relaxed=relaxed, upper_bound=0.0, decision=decision, state=state, metrics=metrics, profit=0.0,
        gap=0.0, evaluations=0, infeasible_candidates=0, accepted_moves=0, profit_trace=[0.0],
        final_step=0.0, status=SolveStatus.OK, regulated=params.regulated,
        diagnostics={"empty_market": True},
    )


def solve_market(
    instance: NetworkInstance,
    params: BehaviorParams,
    settings: Optional[SolverSettings] = None,
    regulated: Optional[bool] = None,
    mu0: Optional[float] = None,
    initial_decision: Optional[PlatformDecision] = None,
) -> SolveReport:
    """
    Upper bound by dual decomposition, then a feasible decision by refinement.

    Args:
        regulated: solve with the wage floor of params (True), ignore it (False)
            or follow params (None)
        mu0: dual warm start in $/min
        initial_decision: refine from this decision instead of the relaxed point
    """
    settings = (settings or SolverSettings()).with_mu0(mu0)
    params = resolve_regulation(params, regulated)
    if instance.potential_demand.sum() <= 0:
        return empty_market_report(instance, params, settings.dual)
    relaxed = run_dual(instance, params, settings.dual)
    return refine(
        instance, params, relaxed,
        config=settings.refine,
        eq_config=settings.equilibrium,
        dual_config=settings.dual,
        initial_decision=initial_decision,
    )
