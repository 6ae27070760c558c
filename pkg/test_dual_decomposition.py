import numpy as np
import pytest

from Market.network_model import hourly_to_per_minute, platform_profit
from Solvers.dual_decomposition import (
    DualConfig,
    TerminationReason,
    ZoneGrids,
    dual_update,
    lagrangian,
    run_dual,
    wage_subproblem,
    wage_value,
    zone_lagrangian,
    zone_subproblem,
    zone_surfaces,
)
from Solvers.equilibrium import equilibrium_fixed_point
from Utilities.errors import ConfigurationError, DualDivergenceError


def test_lagrangian_separates_by_zone(two_zone, params):
    """Zone terms plus the wage term rebuild the whole-market Lagrangian"""
    rng = np.random.default_rng(29)
    for _ in range(1000):
        q = rng.uniform(1.0, 60.0)
        r = rng.uniform(0.05, 5.0, size=2)
        idle_av = rng.uniform(0.0, 300.0, size=2) * (rng.random(2) < 0.7)
        idle_h = rng.uniform(0.0, 300.0, size=2) * (rng.random(2) < 0.7)
        mu = rng.uniform(-1.0, 2.0)
        fraction = rng.uniform(0.0, 1.0)
        separated = sum(
            zone_lagrangian(i, r[i], idle_av[i], idle_h[i], mu, params, two_zone) for i in range(2)
        ) + fraction * wage_value(q, mu, params)
        whole = lagrangian(two_zone, params, q, r, idle_av, idle_h, mu, offered_fraction=fraction)
        assert separated == pytest.approx(whole, rel=1e-9, abs=1e-9)


def test_wage_subproblem_finds_grid_optimum(params):
    dense = np.linspace(1.0, 60.0, 200001)
    for mu in (0.3, 0.5, 0.8):
        choice = wage_subproblem(mu, params)
        values = wage_value(dense, mu, params)
        best = int(np.argmax(values))
        assert choice.value >= values[best] - 1e-5 * abs(values[best])
        assert abs(choice.q - dense[best]) <= 59.0 / 119.0
        assert choice.offered_hours > 0


def test_wage_subproblem_may_hire_nobody_under_a_floor(params):
    """At mu = 0 every wage loses money, so a regulated platform hires no one"""
    regulated = wage_subproblem(0.0, params, q_floor=15.0, regulated=True)
    assert not regulated.hires
    assert regulated.value == 0.0
    assert regulated.q == 15.0

    unregulated = wage_subproblem(0.0, params)
    assert unregulated.hires
    assert unregulated.value < 0
    assert unregulated.q == pytest.approx(1.0)


def test_wage_floor_above_range_is_a_configuration_error(params):
    with pytest.raises(ConfigurationError):
        wage_subproblem(0.5, params, DualConfig(q_hi=40.0), q_floor=45.0)
    with pytest.raises(ValueError):
        DualConfig(r_lo=2.0, r_hi=1.0)


def test_zone_subproblem_matches_dense_grid(two_zone, params):
    config = DualConfig(idle_cap=400.0)
    r_axis = np.linspace(config.r_lo, config.r_hi, 400)
    n_axis = np.linspace(0.0, 400.0, 400)
    grids = ZoneGrids(two_zone, params, config)
    for mu in (0.2, 0.6):
        cost = min(hourly_to_per_minute(params.D), mu)
        for i in range(2):
            choice = zone_subproblem(i, mu, params, two_zone, grids=grids)
            revenue, hours = zone_surfaces(np.array([i]), r_axis[None, :], n_axis[None, :], two_zone, params)
            values = (revenue - cost * hours)[0]
            ir, ik = np.unravel_index(np.argmax(values), values.shape)
            assert choice.value >= values[ir, ik] - 1e-6 * abs(values[ir, ik])
            assert 0.0 < choice.idle_total <= 400.0


def test_zone_choice_takes_the_cheaper_vehicle(two_zone, params):
    av_cost = hourly_to_per_minute(params.D)
    human = zone_subproblem(0, 0.5 * av_cost, params, two_zone)
    assert human.idle_av == 0.0 and human.idle_h > 0
    av = zone_subproblem(0, 2.0 * av_cost, params, two_zone)
    assert av.idle_h == 0.0 and av.idle_av > 0
    tie = zone_subproblem(0, av_cost, params, two_zone)
    assert tie.idle_h == 0.0


def test_dual_value_bounds_equilibrium_profit(two_zone, params, decision):
    """Any equilibrium is relaxed-feasible, so every dual value lies above its profit"""
    state = equilibrium_fixed_point(two_zone, params, decision).state
    profit = platform_profit(decision, state, params, two_zone.travel_time)
    config = DualConfig(idle_cap=2000.0, n_r=60, n_n=60)
    grids = ZoneGrids(two_zone, params, config)
    for mu in (0.2, 0.45, 1.0):
        value = sum(choice.value for choice in grids.solve(mu)) + wage_subproblem(mu, params, config).value
        assert value >= profit - 1e-4 * abs(profit)


def test_dual_update_projects_only_under_regulation():
    assert dual_update(0.5, 2.0, 0.1, regulated=False) == pytest.approx(0.3)
    assert dual_update(0.1, 2.0, 0.1, regulated=False) == pytest.approx(-0.1)
    assert dual_update(0.1, 2.0, 0.1, regulated=True) == 0.0
    assert dual_update(0.1, -2.0, 0.1, regulated=True) == pytest.approx(0.3)


def test_zero_step_keeps_multiplier_fixed(two_zone, params):
    relaxed = run_dual(two_zone, params, DualConfig(mu0=0.0, tau0=0.0, max_iters=5, idle_cap=2000.0))
    assert relaxed.mu_trajectory
    assert all(mu == 0.0 for mu in relaxed.mu_trajectory)
    assert relaxed.mu_final == 0.0


def test_oversized_step_diverges(two_zone, params):
    with pytest.raises(DualDivergenceError):
        run_dual(two_zone, params, DualConfig(mu0=5.0, tau0=1e9, max_iters=10, idle_cap=2000.0))


def test_regulated_multiplier_stays_nonnegative(two_zone, params):
    regulated = params.updated(q_min=20.0)
    relaxed = run_dual(two_zone, regulated, DualConfig(idle_cap=2000.0, max_iters=300))
    assert all(mu >= 0.0 for mu in relaxed.mu_trajectory)
    assert relaxed.q >= 20.0
    assert 0.0 <= relaxed.hire_fraction <= 1.0


def test_run_dual_returns_best_bound(two_zone, params):
    relaxed = run_dual(two_zone, params, DualConfig(idle_cap=2000.0, max_iters=400))
    assert relaxed.upper_bound == pytest.approx(min(relaxed.dual_values))
    assert relaxed.iterations == len(relaxed.mu_trajectory)
    assert relaxed.mu0 == pytest.approx(hourly_to_per_minute(params.D))
    if relaxed.termination is TerminationReason.FEASIBLE:
        assert relaxed.relaxed_objective <= relaxed.upper_bound + 1e-6 * abs(relaxed.upper_bound)
    decision = relaxed.decision()
    assert decision.M == 2
    assert np.all(decision.idle_av >= 0)


def test_wage_subproblem_matches_dense_oracle(params):
    config = DualConfig()
    coarse = (config.q_hi - config.q_lo) / (config.n_q - 1)
    dense = np.linspace(config.q_lo, config.q_hi, 590001)
    rng = np.random.default_rng(43)
    for _ in range(20):
        varied = params.updated(N0=rng.uniform(500.0, 20000.0), q0=rng.uniform(20.0, 40.0),
                                sigma=rng.uniform(0.08, 0.3))
        mu = rng.uniform(0.25, 0.9)
        choice = wage_subproblem(mu, varied, config)
        values = wage_value(dense, mu, varied)
        best = int(np.argmax(values))
        assert choice.value >= values[best] - 1e-6 * abs(values[best])
        assert abs(choice.q - dense[best]) <= coarse


def _zone_oracle(i, mu, instance, params, cap):
    """Dense (fare, idle AV, idle human) grid of one zone's Lagrangian term"""
    r_axis = np.linspace(DualConfig().r_lo, DualConfig().r_hi, 121)
    split_axis = np.linspace(0.0, cap, 41)
    a, h = np.meshgrid(split_axis, split_axis, indexing="ij")
    keep = a + h <= cap
    a, h = a[keep], h[keep]
    totals, index = np.unique(a + h, return_inverse=True)
    revenue, hours = zone_surfaces(np.array([i]), r_axis[None, :], totals[None, :], instance, params)
    revenue, busy = revenue[0][:, index], (hours[0] - totals[None, :])[:, index]
    total = a + h
    with np.errstate(divide="ignore", invalid="ignore"):
        av_part = np.where(total > 0, a / total, 0.0)
    av_cost = hourly_to_per_minute(params.D)
    av_hours = av_part * busy + a
    human_hours = (1.0 - av_part) * np.where(total > 0, busy, 0.0) + h
    values = revenue - av_cost * av_hours - mu * human_hours
    return float(values.max())


def test_zone_subproblem_matches_dense_oracle(params, random_network):
    cap = 400.0
    config = DualConfig(idle_cap=cap)
    rng = np.random.default_rng(47)
    for _ in range(20):
        instance = random_network(rng, 2)
        mu = rng.uniform(0.1, 1.0)
        grids = ZoneGrids(instance, params, config)
        for i in range(2):
            choice = zone_subproblem(i, mu, params, instance, grids=grids)
            oracle = _zone_oracle(i, mu, instance, params, cap)
            assert choice.value >= oracle - 1e-6 * abs(oracle)
            direct = zone_lagrangian(i, choice.r, choice.idle_av, choice.idle_h, mu, params, instance)
            assert choice.value == pytest.approx(direct, rel=1e-9, abs=1e-12)
