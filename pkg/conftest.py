import numpy as np
import pytest

from Market.market_types import BehaviorParams, NetworkInstance, PlatformDecision, Zone, ZoneLabel
from Solvers.dual_decomposition import DualConfig
from Solvers.pipeline import SolverSettings
from Solvers.refiner import RefineConfig


def build_instance(potential_demand, travel_time, offset=5.0, remote=()):
    """Small hand-made network; outside cost is travel time plus a flat offset"""
    travel_time = np.array(travel_time, dtype=float)
    size = travel_time.shape[0]
    zones = [
        Zone(zone_id=k + 1, label=ZoneLabel.REMOTE if k + 1 in remote else ZoneLabel.URBAN)
        for k in range(size)
    ]
    return NetworkInstance(
        zones=zones,
        travel_time=travel_time,
        potential_demand=np.array(potential_demand, dtype=float),
        outside_cost=travel_time + offset,
    )


@pytest.fixture
def params():
    return BehaviorParams(alpha=0.5, eps=0.12, sigma=0.17, eta=0.1, L=10.0, N0=1000.0, q0=29.34, D=26.0)


@pytest.fixture
def one_zone():
    return build_instance([[4.0]], [[6.0]])


@pytest.fixture
def two_zone():
    return build_instance([[3.0, 1.5], [1.5, 2.0]], [[5.0, 9.0], [9.0, 6.0]], remote=(2,))


@pytest.fixture
def three_zone():
    return build_instance(
        [[2.0, 1.0, 0.5], [1.5, 2.5, 0.5], [0.2, 0.8, 1.0]],
        [[4.0, 8.0, 12.0], [8.0, 5.0, 7.0], [12.0, 7.0, 6.0]],
        remote=(3,),
    )


@pytest.fixture
def decision():
    return PlatformDecision(q=30.0, r=np.array([1.5, 1.5]), idle_av=np.zeros(2))


@pytest.fixture
def fast_settings():
    """Coarser search for unit-scale solves; idle cap above the driver pool"""
    return SolverSettings(
        dual=DualConfig(idle_cap=2000.0, max_iters=400),
        refine=RefineConfig(max_evaluations=1500, min_step=1e-3),
    )


@pytest.fixture
def empty_two_zone():
    return build_instance(np.zeros((2, 2)), [[5.0, 8.0], [8.0, 5.0]])


@pytest.fixture
def random_network():
    """Factory for seeded random networks with symmetric travel times"""

    def make(rng, size, remote=()):
        t = rng.uniform(4.0, 12.0, size=(size, size))
        t = 0.5 * (t + t.T)
        np.fill_diagonal(t, rng.uniform(3.0, 6.0, size=size))
        potential = rng.uniform(0.5, 3.0, size=(size, size))
        return build_instance(potential, t, offset=float(rng.uniform(3.0, 8.0)), remote=remote)

    return make
