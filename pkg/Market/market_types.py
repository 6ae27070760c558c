# Market/market_types.py
import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from Utilities.errors import InstanceDataError, ModelDomainError


class ZoneLabel(Enum):
    URBAN = "urban"
    REMOTE = "remote"


@dataclass(frozen=True)
class Zone:
    zone_id: int
    label: ZoneLabel = ZoneLabel.URBAN
    postal_code: Optional[str] = None

    def info(self) -> Dict[str, Any]:
        return {
            "zone_id": self.zone_id,
            "postal_code": self.postal_code,
            "label": self.label.value,
        }


def _square_matrix(name: str, values, size: int) -> np.ndarray:
    matrix = np.array(values, dtype=float)
    if matrix.shape != (size, size):
        raise InstanceDataError(f"{name} must be {size}x{size}, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        i, j = np.argwhere(~np.isfinite(matrix))[0]
        raise InstanceDataError(f"{name}[{i},{j}] is not finite")
    if np.any(matrix < 0):
        i, j = np.argwhere(matrix < 0)[0]
        raise InstanceDataError(f"{name}[{i},{j}] = {matrix[i, j]} is negative")
    return matrix


@dataclass(eq=False)
class NetworkInstance:
    """Zones, travel times (min), potential OD demand (pax/min) and outside-option costs"""
    zones: List[Zone]
    travel_time: np.ndarray
    potential_demand: np.ndarray
    outside_cost: np.ndarray

    def __post_init__(self):
        if len(self.zones) == 0:
            raise InstanceDataError("an instance needs at least one zone")
        ids = [zone.zone_id for zone in self.zones]
        if len(set(ids)) != len(ids):
            raise InstanceDataError("zone ids must be unique")
        size = len(self.zones)
        self.travel_time = _square_matrix("travel_time", self.travel_time, size)
        self.potential_demand = _square_matrix("potential_demand", self.potential_demand, size)
        self.outside_cost = _square_matrix("outside_cost", self.outside_cost, size)
        bad = (self.potential_demand > 0) & (self.travel_time <= 0)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise InstanceDataError(f"travel_time[{i},{j}] must be positive where demand exists")

    @property
    def M(self) -> int:
        return len(self.zones)

    @property
    def zone_ids(self) -> List[int]:
        return [zone.zone_id for zone in self.zones]

    @property
    def remote_mask(self) -> np.ndarray:
        return np.array([zone.label is ZoneLabel.REMOTE for zone in self.zones])

    @property
    def outbound_potential(self) -> np.ndarray:
        return self.potential_demand.sum(axis=1)

    @property
    def active_zones(self) -> np.ndarray:
        """Zones with positive outbound potential demand"""
        return self.outbound_potential > 0

    def with_demand(self, potential_demand: np.ndarray) -> "NetworkInstance":
        return dataclasses.replace(self, potential_demand=potential_demand)

    def with_outside_cost(self, outside_cost: np.ndarray) -> "NetworkInstance":
        return dataclasses.replace(self, outside_cost=outside_cost)

    def info(self) -> Dict[str, Any]:
        return {
            "zones": self.M,
            "remote_zones": int(self.remote_mask.sum()),
            "potential_demand_per_min": float(self.potential_demand.sum()),
            "mean_travel_time_min": float(self.travel_time.mean()),
        }


class BehaviorParams(BaseModel):
    """
    Scalar model parameters.

    Rates q0, D and q_min are in $/hour; alpha is $/min; L is min*vehicles^0.5.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(gt=0)
    eps: float = Field(gt=0)
    sigma: float = Field(gt=0)
    eta: float = Field(gt=0)
    L: float = Field(gt=0)
    N0: float = Field(gt=0)
    q0: float = Field(gt=0)
    D: float = Field(gt=0)
    q_min: Optional[float] = Field(default=None, ge=0)

    @property
    def regulated(self) -> bool:
        return self.q_min is not None

    def updated(self, **changes) -> "BehaviorParams":
        """Copy with changes applied, re-running validation"""
        values = self.model_dump()
        values.update(changes)
        return BehaviorParams(**values)


def _vector(name: str, values, size: Optional[int] = None) -> np.ndarray:
    vector = np.array(values, dtype=float).reshape(-1)
    if size is not None and vector.shape != (size,):
        raise ModelDomainError(f"{name} must have {size} entries, got {vector.shape[0]}")
    if not np.all(np.isfinite(vector)):
        raise ModelDomainError(f"{name} must be finite")
    return vector


@dataclass(eq=False)
class PlatformDecision:
    """Wage q ($/hour), fares r ($/min of trip), idle AVs per zone, optional AV flows"""
    q: float
    r: np.ndarray
    idle_av: np.ndarray
    av_flow: Optional[np.ndarray] = None
    hire_fraction: float = 1.0

    def __post_init__(self):
        self.q = float(self.q)
        if not np.isfinite(self.q) or self.q <= 0:
            raise ModelDomainError(f"wage must be positive, got {self.q}")
        self.r = _vector("r", self.r)
        self.idle_av = _vector("idle_av", self.idle_av, self.r.shape[0])
        if np.any(self.r <= 0):
            raise ModelDomainError("fares must be positive")
        if np.any(self.idle_av < 0):
            raise ModelDomainError("idle AV counts must be nonnegative")
        self.hire_fraction = float(self.hire_fraction)
        if not 0.0 <= self.hire_fraction <= 1.0:
            raise ModelDomainError(f"hire fraction must lie in [0, 1], got {self.hire_fraction}")
        if self.av_flow is not None:
            self.av_flow = np.array(self.av_flow, dtype=float)
            if self.av_flow.shape != (self.M, self.M):
                raise ModelDomainError("av_flow must be MxM")
            if np.any(self.av_flow < 0) or np.any(np.diag(self.av_flow) != 0):
                raise ModelDomainError("av_flow must be nonnegative with a zero diagonal")

    @property
    def M(self) -> int:
        return self.r.shape[0]

    def with_changes(self, **changes) -> "PlatformDecision":
        return dataclasses.replace(self, **changes)

    def info(self) -> Dict[str, Any]:
        return {
            "q": self.q,
            "r": self.r.tolist(),
            "idle_av": self.idle_av.tolist(),
            "hire_fraction": self.hire_fraction,
        }


class TripStats(NamedTuple):
    tbar: np.ndarray
    ebar: np.ndarray


class FlowResiduals(NamedTuple):
    av: np.ndarray
    human: np.ndarray


class Commission(NamedTuple):
    delta: float
    negative: bool


@dataclass(eq=False)
class FleetHours:
    """Vehicle-hours by status; totals are per-minute rates of vehicle time (vehicles)"""
    in_service_h: float
    pickup_h: float
    idle_h: float
    in_service_a: float
    pickup_a: float
    idle_a: float
    w_d: np.ndarray

    @property
    def N_H(self) -> float:
        return self.in_service_h + self.pickup_h + self.idle_h

    @property
    def N_A(self) -> float:
        return self.in_service_a + self.pickup_a + self.idle_a


@dataclass(eq=False)
class MarketState:
    lam: np.ndarray
    w_p: np.ndarray
    w_d: np.ndarray
    idle_h: np.ndarray
    idle_av: np.ndarray
    f_h: np.ndarray
    f_a: np.ndarray
    N_A: float
    N_H: float
    delta: float
    ebar: np.ndarray
    tbar: np.ndarray
    P: np.ndarray
    willing_h: float
    hired_h: float
    hours: FleetHours
    commission_negative: bool = False

    @property
    def idle_total(self) -> np.ndarray:
        return self.idle_av + self.idle_h

    @property
    def human_share(self) -> np.ndarray:
        """Human share of idle vehicles; 0 where a zone has none"""
        total = self.idle_total
        return np.divide(self.idle_h, total, out=np.zeros_like(total), where=total > 0)

    @property
    def av_share(self) -> np.ndarray:
        total = self.idle_total
        return np.divide(self.idle_av, total, out=np.zeros_like(total), where=total > 0)

    @property
    def revenue_rates(self) -> np.ndarray:
        """Realized outbound demand per zone"""
        return self.lam.sum(axis=1)


@dataclass
class ZoneSummary:
    zone_id: int
    label: str
    fare: float
    ride_fare: float
    demand: float
    idle_av: float
    idle_h: float
    w_p: float
    w_d: float
    human_share: float

    def info(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class MarketMetrics:
    platform_profit: float
    total_demand: float
    potential_demand: float
    mode_share: float
    mean_fare: float
    mean_wait: float
    passenger_surplus: float
    driver_surplus: float
    social_welfare: float
    N_A: float
    N_H: float
    av_share: float
    occupancy_av: float
    occupancy_h: float
    remote_human_share: float
    urban_human_share: float
    zones: List[ZoneSummary] = field(default_factory=list)

    def info(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data.pop("zones")
        return data
