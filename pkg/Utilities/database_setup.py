# Utilities/database_setup.py
from sqlalchemy import Boolean, Column, DateTime, Float, ForeignKey, Integer, String, UniqueConstraint, create_engine
from sqlalchemy.orm import declarative_base, relationship
from sqlalchemy.sql import func

Base = declarative_base()


class SolveLog(Base):
    __tablename__ = 'solve_logs'

    id = Column(Integer, primary_key=True)
    scenario = Column(String, nullable=False)
    variable = Column(String, nullable=False, default='')
    value = Column(Float, nullable=True)
    status = Column(String, nullable=False)
    regulated = Column(Boolean, nullable=False, default=False)
    profit = Column(Float, nullable=True)
    upper_bound = Column(Float, nullable=True)
    gap = Column(Float, nullable=True)
    N_A = Column(Float, nullable=True)
    N_H = Column(Float, nullable=True)
    wage = Column(Float, nullable=True)
    demand = Column(Float, nullable=True)
    welfare = Column(Float, nullable=True)
    mu = Column(Float, nullable=True)
    evaluations = Column(Integer, nullable=False, default=0)
    created_at = Column(DateTime, nullable=False, server_default=func.now())

    zone_logs = relationship("ZoneLog", back_populates="solve_log", cascade="all, delete-orphan")

    __table_args__ = (
        # one row per scenario point and time
        UniqueConstraint('scenario', 'variable', 'value', 'created_at', name='uix_scenario_point_time'),
    )


class ZoneLog(Base):
    __tablename__ = 'zone_logs'

    id = Column(Integer, primary_key=True)
    solve_log_id = Column(Integer, ForeignKey('solve_logs.id'), nullable=False)
    zone_id = Column(Integer, nullable=False)
    fare = Column(Float, nullable=False)
    idle_av = Column(Float, nullable=False)
    idle_h = Column(Float, nullable=False)
    w_p = Column(Float, nullable=True)
    w_d = Column(Float, nullable=True)
    human_share = Column(Float, nullable=False)

    solve_log = relationship("SolveLog", back_populates="zone_logs")

    __table_args__ = (
        UniqueConstraint('solve_log_id', 'zone_id', name='uix_solvelog_zone'),
    )


def init_db(url: str = 'sqlite:///mixfleet_runs.db', echo: bool = False):
    """Create the ledger tables if they don't exist and return the engine."""
    engine = create_engine(url, echo=echo)
    Base.metadata.create_all(engine)
    return engine
