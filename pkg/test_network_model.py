import math

import numpy as np
import pytest
from scipy.special import softmax

from Market.market_types import BehaviorParams, NetworkInstance, PlatformDecision, Zone
from Market.network_model import (
    commission_from_wage,
    demand_rate,
    driver_supply,
    driver_surplus,
    flow_balance_residuals,
    generalized_cost,
    hourly_to_per_minute,
    human_reposition_flow,
    idle_split_accounting,
    logit_probabilities,
    passenger_surplus,
    passenger_wait,
    per_minute_to_hourly,
    reposition_probs,
    reposition_utilities,
    trip_costs,
    trip_stats,
)
from Utilities.errors import InstanceDataError, ModelDomainError


def test_demand_rate_reference_value():
    """Cheaper than the outside option by 10 raises the share above one half"""
    assert demand_rate(10.0, 20.0, 30.0, 0.12) == pytest.approx(7.6852, abs=1e-4)
    assert demand_rate(10.0, 30.0, 30.0, 0.12) == pytest.approx(5.0)


def test_demand_rate_bounded_and_decreasing_in_cost():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        lam0 = rng.uniform(0.01, 50.0)
        c0 = rng.uniform(0.0, 60.0)
        eps = rng.uniform(0.01, 1.0)
        low, high = np.sort(rng.uniform(0.0, 80.0, size=2))
        cheap = demand_rate(lam0, low, c0, eps)
        dear = demand_rate(lam0, high, c0, eps)
        assert 0.0 <= dear <= cheap <= lam0


def test_driver_supply_reference_value():
    assert driver_supply(10000.0, 26.2, 29.34, 0.17) == pytest.approx(3696.3, abs=0.5)
    assert driver_supply(1000.0, 29.34, 29.34, 0.17) == pytest.approx(500.0)


def test_passenger_wait_square_root_law():
    assert passenger_wait(43.0, 100.0) == pytest.approx(4.3)
    np.testing.assert_allclose(passenger_wait(10.0, np.array([1.0, 4.0, 25.0])), [10.0, 5.0, 2.0])
    with pytest.raises(ModelDomainError):
        passenger_wait(43.0, 0.0)


def test_hourly_conversion():
    assert hourly_to_per_minute(26.0) == pytest.approx(26.0 / 60.0)
    assert per_minute_to_hourly(hourly_to_per_minute(17.5)) == pytest.approx(17.5)


def test_commission_from_wage():
    """Revenue of 100 $/min against a wage bill of 50 $/min leaves half"""
    lam = np.array([[10.0]])
    r = np.array([1.0])
    t = np.array([[10.0]])
    commission = commission_from_wage(30.0, 100.0, lam, r, t)
    assert commission.delta == pytest.approx(0.5)
    assert not commission.negative

    losing = commission_from_wage(300.0, 100.0, lam, r, t)
    assert losing.delta < 0
    assert losing.negative

    with pytest.raises(ModelDomainError):
        commission_from_wage(30.0, 100.0, np.zeros((1, 1)), r, t)


def test_trip_stats_undefined_without_demand():
    lam = np.array([[2.0, 2.0], [0.0, 0.0]])
    t = np.array([[4.0, 8.0], [8.0, 4.0]])
    stats = trip_stats(lam, t, np.array([1.0, 1.0]), delta=0.25)
    assert stats.tbar[0] == pytest.approx(6.0)
    assert stats.ebar[0] == pytest.approx(0.75 * 6.0)
    assert math.isnan(stats.tbar[1])


def test_reposition_probability_reference_case():
    """Staying earns 1 + 10 ln 3 per minute against 1 for moving, which gives a 3:1 split"""
    ebar = np.array([10.0 * (1.0 + math.log(3.0) / 0.1), 20.0])
    tbar = np.array([5.0, 5.0])
    w_d = np.array([5.0, 5.0])
    t = np.array([[1.0, 10.0], [10.0, 1.0]])
    P = reposition_probs(ebar, tbar, w_d, t, eta=0.1)
    assert P[0, 0] == pytest.approx(0.75)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)


def test_reposition_avoids_zones_without_demand():
    ebar = np.array([5.0, np.nan, 3.0])
    tbar = np.array([5.0, np.nan, 6.0])
    w_d = np.array([2.0, np.inf, 3.0])
    t = np.full((3, 3), 4.0)
    P = reposition_probs(ebar, tbar, w_d, t, eta=0.5)
    np.testing.assert_allclose(P[:, 1], 0.0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)


def test_reposition_uniform_when_insensitive():
    ebar = np.array([5.0, 9.0])
    tbar = np.array([5.0, 6.0])
    P = reposition_probs(ebar, tbar, np.array([1.0, 1.0]), np.full((2, 2), 3.0), eta=0.0)
    np.testing.assert_allclose(P, 0.5)
    with pytest.raises(ModelDomainError):
        reposition_probs(ebar, tbar, np.array([1.0, 1.0]), np.full((2, 2), 3.0), eta=-1.0)


def test_logit_rows_are_distributions():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        size = int(rng.integers(1, 6))
        utilities = rng.normal(0.0, 5.0, size=(size, size))
        dead = rng.random(size) < 0.3
        utilities[:, dead] = -np.inf
        probs = logit_probabilities(utilities, eta=float(rng.uniform(0.0, 2.0)))
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)
        if 0 < dead.sum() < size:
            np.testing.assert_allclose(probs[:, dead], 0.0, atol=1e-300)


def test_driver_surplus_zero_at_zero_wage():
    params = BehaviorParams(alpha=3.0, eps=0.12, sigma=0.17, eta=0.1, L=43.0, N0=10000.0, q0=29.34, D=26.0)
    assert driver_surplus(params, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert driver_surplus(params, 30.0) > driver_surplus(params, 20.0) > 0
    assert driver_surplus(params, 30.0, hired_fraction=0.5) == pytest.approx(0.5 * driver_surplus(params, 30.0))


def test_passenger_surplus_grows_as_trips_get_cheaper(two_zone, params):
    r = np.array([1.0, 1.0])
    slow = trip_costs(two_zone, params, r, np.array([4.0, 4.0]))
    fast = trip_costs(two_zone, params, r, np.array([1.0, 1.0]))
    assert passenger_surplus(two_zone, fast, params.eps) > passenger_surplus(two_zone, slow, params.eps) > 0


def test_idle_split_accounting_adds_up():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        size = int(rng.integers(1, 5))
        lam = rng.uniform(0.0, 3.0, size=(size, size))
        t = rng.uniform(1.0, 20.0, size=(size, size))
        idle_h = rng.uniform(0.1, 50.0, size=size)
        idle_av = rng.uniform(0.0, 50.0, size=size)
        w_p = 10.0 / np.sqrt(idle_h + idle_av)
        hours = idle_split_accounting(lam, t, w_p, idle_h, idle_av)
        busy = float(np.sum(lam * t) + np.sum(lam.sum(axis=1) * w_p))
        total = busy + idle_h.sum() + idle_av.sum()
        assert hours.N_H + hours.N_A == pytest.approx(total, rel=1e-12)
        np.testing.assert_allclose(hours.w_d * lam.sum(axis=1), idle_h + idle_av)


def test_instance_rejects_bad_matrices():
    zones = [Zone(zone_id=1), Zone(zone_id=2)]
    good = np.array([[5.0, 8.0], [8.0, 5.0]])
    with pytest.raises(InstanceDataError):
        NetworkInstance(zones, good, np.array([[1.0, -1.0], [1.0, 1.0]]), good)
    with pytest.raises(InstanceDataError):
        NetworkInstance(zones, np.zeros((2, 2)), np.ones((2, 2)), good)
    with pytest.raises(InstanceDataError):
        NetworkInstance([Zone(zone_id=1), Zone(zone_id=1)], good, np.ones((2, 2)), good)


def test_decision_rejects_out_of_domain_values():
    with pytest.raises(ModelDomainError):
        PlatformDecision(q=0.0, r=[1.0], idle_av=[0.0])
    with pytest.raises(ModelDomainError):
        PlatformDecision(q=20.0, r=[1.0, 1.0], idle_av=[0.0])
    with pytest.raises(ModelDomainError):
        PlatformDecision(q=20.0, r=[1.0], idle_av=[-1.0])
    with pytest.raises(ModelDomainError):
        PlatformDecision(q=20.0, r=[1.0], idle_av=[0.0], hire_fraction=1.5)


def test_demand_rate_decreasing_in_passenger_wait():
    rng = np.random.default_rng(13)
    for _ in range(1000):
        lam0 = rng.uniform(0.01, 50.0)
        alpha = rng.uniform(0.5, 5.0)
        r = rng.uniform(0.05, 3.0)
        t = rng.uniform(1.0, 20.0)
        c0 = rng.uniform(0.0, 30.0)
        eps = rng.uniform(0.01, 0.5)
        short = rng.uniform(0.0, 10.0)
        long = short + rng.uniform(0.01, 10.0)
        quick = demand_rate(lam0, generalized_cost(alpha, short, r, t), c0, eps)
        slow = demand_rate(lam0, generalized_cost(alpha, long, r, t), c0, eps)
        assert slow < quick


def test_hourly_round_trip_is_exact_to_rounding():
    rng = np.random.default_rng(19)
    for rate in rng.uniform(0.0, 500.0, size=1000):
        assert per_minute_to_hourly(hourly_to_per_minute(rate)) == pytest.approx(rate, rel=4 * np.finfo(float).eps)
        assert hourly_to_per_minute(per_minute_to_hourly(rate)) == pytest.approx(rate, rel=4 * np.finfo(float).eps)


def test_human_reposition_flow_worked_examples():
    """Equal shares and uniform choices split each zone's human drop-offs evenly"""
    lam = np.array([[1.0, 2.0], [3.0, 4.0]])
    uniform = np.full((2, 2), 0.5)
    f_h = human_reposition_flow(uniform, lam, np.array([5.0, 5.0]), np.array([5.0, 5.0]))
    np.testing.assert_allclose(f_h, [[1.0, 1.0], [1.5, 1.5]])

    assert np.all(human_reposition_flow(uniform, lam, np.zeros(2), np.array([5.0, 5.0])) == 0.0)
    all_human = human_reposition_flow(uniform, lam, np.array([2.0, 7.0]), np.zeros(2))
    np.testing.assert_allclose(all_human.sum(axis=1), lam.sum(axis=0))

    with pytest.raises(ModelDomainError):
        human_reposition_flow(uniform, lam, np.array([0.0, 5.0]), np.array([0.0, 5.0]))


def test_flow_residuals_telescope_and_close_when_balanced():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        size = int(rng.integers(1, 6))
        lam = rng.uniform(0.0, 3.0, size=(size, size))
        human_share = rng.uniform(0.0, 1.0, size=size)
        f_h = rng.uniform(0.0, 2.0, size=(size, size))
        f_a = rng.uniform(0.0, 2.0, size=(size, size))
        residuals = flow_balance_residuals(lam, human_share, 1.0 - human_share, f_h, f_a)
        scale = lam.sum() + f_h.sum() + f_a.sum()
        assert abs(residuals.human.sum()) <= 1e-12 * scale
        assert abs(residuals.av.sum()) <= 1e-12 * scale

        pair = lam[:2, :2] if size >= 2 else rng.uniform(0.1, 3.0, size=(2, 2))
        shares = human_share[:2] if size >= 2 else np.array([0.4, 0.7])
        open_flow = flow_balance_residuals(pair, shares, 1.0 - shares, np.zeros((2, 2)), np.zeros((2, 2)))
        excess = open_flow.human[0]
        closing = np.zeros((2, 2))
        if excess > 0:
            closing[0, 1] = excess
        else:
            closing[1, 0] = -excess
        balanced = flow_balance_residuals(pair, shares, 1.0 - shares, closing, np.zeros((2, 2)))
        np.testing.assert_allclose(balanced.human, 0.0, atol=1e-12 * max(pair.sum(), 1.0))


def test_dead_zone_rows_agree_with_a_finite_penalty():
    """Scoring unreachable zones at the lowest live utility minus 10/eta moves each probability by at most e^-10 per zone"""
    rng = np.random.default_rng(37)
    for _ in range(1000):
        size = int(rng.integers(2, 6))
        dead = rng.random(size) < 0.4
        dead[int(rng.integers(size))] = False
        ebar = np.where(dead, np.nan, rng.uniform(1.0, 20.0, size=size))
        tbar = np.where(dead, np.nan, rng.uniform(2.0, 15.0, size=size))
        w_d = np.where(dead, np.inf, rng.uniform(0.5, 10.0, size=size))
        t = rng.uniform(2.0, 15.0, size=(size, size))
        eta = rng.uniform(0.05, 2.0)
        utilities = reposition_utilities(ebar, tbar, w_d, t)
        live = np.isfinite(utilities)
        penalized = np.where(live, utilities, utilities[live].min() - 10.0 / eta)
        expected = softmax(eta * penalized, axis=1)
        P = reposition_probs(ebar, tbar, w_d, t, eta)
        np.testing.assert_allclose(P, expected, rtol=0, atol=size * math.exp(-10.0))
