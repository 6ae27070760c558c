"""Calibrated 19-zone runs; slow, select with `pytest -m slow`"""
import pytest

from Solvers.pipeline import SolverSettings, solve_market
from Utilities.calibration import calibrate
from Utilities.instance_generator import default_params, generate_instance
from Utilities.sweeps import HIRED_BINDING_TOLERANCE, Regime, SweepSpec, SweepVariable, sweep
from Utilities.validation import BOUND_SLACK

pytestmark = pytest.mark.slow

SEED = 2024
ACCEPTANCE_OVERRIDES = {"max_evaluations": 600, "min_step": 1e-3}


@pytest.fixture(scope="module")
def settings():
    return SolverSettings.from_overrides(ACCEPTANCE_OVERRIDES)


@pytest.fixture(scope="module")
def calibrated(settings):
    files = generate_instance(SEED)
    instance, report = calibrate(files.instance, files.params, settings)
    return instance, report


@pytest.fixture(scope="module")
def av_cost_sweep(calibrated, settings):
    instance, _ = calibrated
    spec = SweepSpec(variable=SweepVariable.D, lo=5.0, hi=60.0, step=1.0, settings=settings, spot_checks=3)
    return sweep(instance, default_params(), spec)


@pytest.fixture(scope="module")
def wage_floor_sweep(calibrated, settings):
    instance, _ = calibrated
    spec = SweepSpec(variable=SweepVariable.Q_MIN, lo=14.0, hi=32.0, step=0.25, settings=settings, spot_checks=0)
    return sweep(instance, default_params(D=26.0), spec)


def _solved(result):
    return [point for point in result.points if point.ok]


def test_calibration_hits_the_reference_market(calibrated):
    _, report = calibrated
    assert report.reached
    assert report.demand == pytest.approx(148.0, rel=0.02)
    assert report.mode_share == pytest.approx(0.15, abs=0.01)
    for deviation in report.deviations:
        assert abs(deviation) <= 0.2


def test_mixed_fleet_at_reference_av_cost(calibrated, settings):
    instance, _ = calibrated
    report = solve_market(instance, default_params(D=26.0), settings)
    assert report.ok
    assert report.metrics.N_A > 0 and report.metrics.N_H > 0
    assert report.profit <= report.upper_bound + BOUND_SLACK * abs(report.upper_bound)
    assert max(report.residuals.values()) <= 1e-6


def test_av_cost_sweep_stays_inside_the_dual_bound(av_cost_sweep):
    solved = _solved(av_cost_sweep)
    assert len(solved) == len(av_cost_sweep.points)
    for point in solved:
        report = point.report
        assert report.profit <= report.upper_bound + BOUND_SLACK * abs(report.upper_bound), point.value
        assert report.gap <= 0.05, point.value
        if point.value <= 10.0:
            assert report.gap <= 0.01, point.value


def test_av_cost_sweep_regimes(av_cost_sweep):
    regimes = av_cost_sweep.regimes
    assert regimes.order_consistent
    assert {Regime.PURE_AV.value, Regime.MIXED.value, Regime.PURE_HUMAN.value} <= set(regimes.regimes)
    assert 2.0 <= regimes.D_low <= 15.0
    assert 25.0 <= regimes.D_high <= 55.0
    assert regimes.N_A_nonincreasing and regimes.N_H_nondecreasing
    assert regimes.spot_checks
    assert all(check.passed for check in regimes.spot_checks)


def test_remote_zones_keep_more_human_drivers(av_cost_sweep):
    mixed = [point for point in _solved(av_cost_sweep) if point.regime is Regime.MIXED]
    assert mixed
    metrics = mixed[0].report.metrics
    assert metrics.remote_human_share > metrics.urban_human_share


def test_wage_floor_sweep_passes_through_four_regimes(wage_floor_sweep):
    regimes = wage_floor_sweep.regimes
    assert regimes.order_consistent
    assert regimes.regimes[0] == Regime.FLOOR_INACTIVE.value
    assert regimes.regimes[-1] == Regime.HUMANS_REPLACED.value
    assert set(regimes.regimes) == {regime.value for regime in (
        Regime.FLOOR_INACTIVE, Regime.FLOOR_RAISES_HIRING, Regime.FLOOR_CUTS_HIRING, Regime.HUMANS_REPLACED)}
    assert regimes.fleet_variation < 0.10


def test_wage_floor_regimes_show_their_binding_constraints(wage_floor_sweep):
    """Wage above the floor with full hiring, then floor plus full hiring, then floor with partial hiring"""
    for point in _solved(wage_floor_sweep):
        decision = point.report.decision
        if point.regime is Regime.FLOOR_INACTIVE:
            assert decision.q > point.value
            assert decision.hire_fraction >= 0.99
        elif point.regime is Regime.FLOOR_RAISES_HIRING:
            assert decision.q == pytest.approx(point.value, abs=0.05)
            assert decision.hire_fraction >= 1.0 - HIRED_BINDING_TOLERANCE
        elif point.regime is Regime.FLOOR_CUTS_HIRING:
            assert decision.q == pytest.approx(point.value, abs=0.05)
            assert decision.hire_fraction < 1.0 - HIRED_BINDING_TOLERANCE
        elif point.regime is Regime.HUMANS_REPLACED:
            assert point.report.metrics.N_H <= 0.1


def test_wage_floor_first_raises_then_cuts_human_hiring(wage_floor_sweep):
    solved = _solved(wage_floor_sweep)
    raising = [point for point in solved if point.regime is Regime.FLOOR_RAISES_HIRING]
    cutting = [point for point in solved if point.regime is Regime.FLOOR_CUTS_HIRING]
    assert len(raising) >= 2
    hired = [point.report.metrics.N_H for point in raising]
    assert hired[-1] > hired[0]
    assert raising[-1].report.decision.q > raising[0].report.decision.q

    assert cutting
    peak = max(hired)
    assert cutting[-1].report.metrics.N_H < 0.5 * peak
