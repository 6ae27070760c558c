# Utilities/instance_generator.py
"""Seeded synthetic instances shaped like the San Francisco postal-code network"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from Market.market_types import BehaviorParams, NetworkInstance, Zone, ZoneLabel
from .instance_io import InstanceFiles, ScenarioFile

logger = logging.getLogger(__name__)

# zone number -> (postal code, latitude, longitude of the zone centroid)
SF_ZONES: List[Tuple[str, float, float]] = [
    ("94104", 37.7915, -122.4019),
    ("94103", 37.7725, -122.4110),
    ("94109", 37.7925, -122.4212),
    ("94115", 37.7856, -122.4372),
    ("94118", 37.7812, -122.4614),
    ("94123", 37.8003, -122.4364),
    ("94108", 37.7929, -122.4079),
    ("94121", 37.7786, -122.4930),
    ("94102", 37.7796, -122.4193),
    ("94117", 37.7702, -122.4424),
    ("94122", 37.7597, -122.4838),
    ("94114", 37.7587, -122.4330),
    ("94107", 37.7665, -122.3948),
    ("94110", 37.7486, -122.4158),
    ("94131", 37.7450, -122.4420),
    ("94116", 37.7441, -122.4860),
    ("94124", 37.7325, -122.3885),
    ("94132", 37.7213, -122.4790),
    ("94112", 37.7204, -122.4426),
]
REMOTE_ZONES = frozenset({5, 8, 11, 15, 16, 17, 18, 19})
KM_PER_DEG_LAT = 111.0
KM_PER_DEG_LON = 88.0

# ride-sourcing demand of 148 pax/min at a 15% mode share
TARGET_DEMAND = 148.0
TARGET_MODE_SHARE = 0.15


def default_params(D: float = 26.0, q_min: Optional[float] = None) -> BehaviorParams:
    return BehaviorParams(alpha=3.0, eps=0.12, sigma=0.17, eta=0.1, L=43.0, N0=10000.0,
                          q0=29.34, D=D, q_min=q_min)


class GeneratorSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    base_minutes: float = Field(default=4.0, ge=0)
    minutes_per_km: float = Field(default=2.0, gt=0)
    intrazonal_km: float = Field(default=0.9, gt=0)
    jitter_km: float = Field(default=0.25, ge=0)
    gravity_minutes: float = Field(default=9.0, gt=0)
    urban_weight: Tuple[float, float] = (3.0, 6.0)
    remote_weight: Tuple[float, float] = (0.9, 1.1)
    outside_cost_per_minute: float = Field(default=1.0, ge=0)
    outside_cost_offset: float = 5.5
    potential_demand_total: float = Field(default=TARGET_DEMAND / TARGET_MODE_SHARE, gt=0)


def sf_zones(M: int = 19) -> List[Zone]:
    if not 1 <= M <= len(SF_ZONES):
        raise ValueError(f"M must lie in [1, {len(SF_ZONES)}], got {M}")
    return [
        Zone(zone_id=k, postal_code=SF_ZONES[k - 1][0],
             label=ZoneLabel.REMOTE if k in REMOTE_ZONES else ZoneLabel.URBAN)
        for k in range(1, M + 1)
    ]


def generate_network(seed: int, M: int = 19, settings: Optional[GeneratorSettings] = None) -> NetworkInstance:
    settings = settings or GeneratorSettings()
    # any 64-bit seed, signed or not
    rng = np.random.default_rng(seed % 2 ** 64)
    zones = sf_zones(M)
    centroids = np.array([[SF_ZONES[k][1], SF_ZONES[k][2]] for k in range(M)])
    origin = centroids.mean(axis=0)
    xy = np.column_stack([
        (centroids[:, 1] - origin[1]) * KM_PER_DEG_LON,
        (centroids[:, 0] - origin[0]) * KM_PER_DEG_LAT,
    ])
    xy += rng.normal(0.0, settings.jitter_km, size=xy.shape)

    distance = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=2)
    np.fill_diagonal(distance, settings.intrazonal_km)
    travel_time = settings.base_minutes + settings.minutes_per_km * distance

    remote = np.array([zone.label is ZoneLabel.REMOTE for zone in zones])
    weights = np.where(
        remote,
        rng.uniform(*settings.remote_weight, size=M),
        rng.uniform(*settings.urban_weight, size=M),
    )
    gravity = np.outer(weights, weights) * np.exp(-travel_time / settings.gravity_minutes)
    potential = gravity * settings.potential_demand_total / gravity.sum()
    outside = settings.outside_cost_per_minute * travel_time + settings.outside_cost_offset
    return NetworkInstance(zones=zones, travel_time=travel_time, potential_demand=potential, outside_cost=outside)


def generate_instance(
    seed: int,
    M: int = 19,
    params: Optional[BehaviorParams] = None,
    settings: Optional[GeneratorSettings] = None,
) -> InstanceFiles:
    """Deterministic in (seed, M, settings): the same arguments give identical files"""
    instance = generate_network(seed, M, settings)
    logger.info("generated %d zones from seed %d (%.1f potential pax/min)",
                M, seed, instance.potential_demand.sum())
    return InstanceFiles(instance=instance, scenario=ScenarioFile.from_params(params or default_params()))
