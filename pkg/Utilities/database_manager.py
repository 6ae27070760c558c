# Utilities/database_manager.py
import logging
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from sqlalchemy import select
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import sessionmaker

from Market.network_model import per_minute_to_hourly
from Solvers.refiner import SolveReport
from .database_setup import SolveLog, ZoneLog, init_db
from .errors import ConfigurationError

logger = logging.getLogger(__name__)


def _finite(value: Optional[float]) -> Optional[float]:
    """SQLite has no inf/nan; store them as NULL"""
    if value is None or not math.isfinite(value):
        return None
    return float(value)


class LedgerManager:
    """
    Records solves and sweep points in a SQLite run ledger.
    """

    def __init__(self, path: Union[str, Path]):
        self.url = f"sqlite:///{Path(path)}"
        try:
            self.engine = init_db(self.url)
        except SQLAlchemyError as exc:
            raise ConfigurationError(f"cannot open run ledger at {path}: {exc}") from exc
        self.Session = sessionmaker(bind=self.engine)

    def record(
        self,
        report: SolveReport,
        scenario: str,
        variable: str = '',
        value: Optional[float] = None,
    ) -> int:
        """
        Store one solve with its per-zone rows.

        Returns:
            int: id of the new solve log row
        """
        metrics = report.metrics
        log = SolveLog(
            scenario=scenario,
            variable=variable,
            value=value,
            status=report.status.value,
            regulated=report.regulated,
            profit=_finite(per_minute_to_hourly(report.profit)),
            upper_bound=_finite(per_minute_to_hourly(report.upper_bound)),
            gap=_finite(report.gap),
            N_A=_finite(metrics.N_A) if metrics else None,
            N_H=_finite(metrics.N_H) if metrics else None,
            wage=report.decision.q,
            demand=_finite(metrics.total_demand) if metrics else None,
            welfare=_finite(per_minute_to_hourly(metrics.social_welfare)) if metrics else None,
            mu=_finite(per_minute_to_hourly(report.relaxed.best_mu)),
            evaluations=report.evaluations,
            created_at=datetime.now(),
        )
        if metrics is not None:
            for zone in metrics.zones:
                log.zone_logs.append(ZoneLog(
                    zone_id=zone.zone_id,
                    fare=zone.fare,
                    idle_av=zone.idle_av,
                    idle_h=zone.idle_h,
                    w_p=_finite(zone.w_p),
                    w_d=_finite(zone.w_d),
                    human_share=zone.human_share,
                ))
        with self.Session() as session:
            try:
                session.add(log)
                session.commit()
                logger.debug("recorded %s %s=%s as solve %d", scenario, variable, value, log.id)
                return log.id
            except SQLAlchemyError as exc:
                session.rollback()
                raise ConfigurationError(f"could not record run: {exc}") from exc

    def list_runs(self, scenario: Optional[str] = None, limit: int = 50) -> List[Dict[str, Any]]:
        """Most recent runs first"""
        query = select(SolveLog).order_by(SolveLog.created_at.desc(), SolveLog.id.desc()).limit(limit)
        if scenario is not None:
            query = query.where(SolveLog.scenario == scenario)
        with self.Session() as session:
            return [
                {
                    "id": log.id,
                    "scenario": log.scenario,
                    "variable": log.variable,
                    "value": log.value,
                    "status": log.status,
                    "profit": log.profit,
                    "gap": log.gap,
                    "N_A": log.N_A,
                    "N_H": log.N_H,
                    "wage": log.wage,
                    "created_at": log.created_at.isoformat(timespec="seconds"),
                }
                for log in session.scalars(query)
            ]

    def zones_of(self, solve_id: int) -> List[Dict[str, Any]]:
        with self.Session() as session:
            rows = session.scalars(select(ZoneLog).where(ZoneLog.solve_log_id == solve_id).order_by(ZoneLog.zone_id))
            return [
                {"zone_id": row.zone_id, "fare": row.fare, "idle_av": row.idle_av, "idle_h": row.idle_h,
                 "w_p": row.w_p, "w_d": row.w_d, "human_share": row.human_share}
                for row in rows
            ]
