import math

import numpy as np
import pytest

from conftest import device, gear, vehicle
from wfsmkit.control import DriveModel, mtpl_solve
from wfsmkit.exceptions import ConfigError, CycleError, DomainError, ValidationError
from wfsmkit.losses import COMPONENTS
from wfsmkit.powertrain import (EDU, KMH, CycleResult, DriveCycle, cruise_efficiency, demand_trace,
                                energy_histogram, run_cycle, synthetic_cycle)


@pytest.fixture(scope="module")
def veh():
    return vehicle()


@pytest.fixture(scope="module")
def edu(coarse_m0):
    model = DriveModel(coarse_m0.design, coarse_m0.fmap, coarse_m0.ratings, coarse_m0.loss_params,
                       device("inverter_sic"))
    return EDU("WFSM", model, gear("gear_single_stage"), 800.0)


def test_zero_speed_cycle_gives_zero_trace(veh):
    trace = demand_trace(DriveCycle.constant(0.0, duration=30.0), veh)
    for arr in (trace.motor_torque, trace.motor_speed, trace.force, trace.wheel_torque):
        assert np.all(arr == 0.0)


def test_cruise_force_hand_evaluation(veh):
    trace = demand_trace(DriveCycle.constant(70.0, duration=10.0), veh)
    v = 70.0 / 3.6
    hand = 0.5 * 1.2 * 0.62 * v**2 + 1900.0 * 9.81 * 0.009
    assert np.allclose(trace.force, hand, rtol=1e-12)
    assert len(np.unique(trace.motor_torque)) == 1 and len(np.unique(trace.motor_speed)) == 1


def test_gear_ratio_algebra(veh):
    cyc = DriveCycle.constant(90.0, duration=5.0)
    a = demand_trace(cyc, veh.with_(gear_ratio=7.0))
    b = demand_trace(cyc, veh.with_(gear_ratio=9.5))
    assert b.motor_speed[0] / a.motor_speed[0] == pytest.approx(9.5 / 7.0, rel=1e-15)
    assert b.motor_torque[0] / a.motor_torque[0] == pytest.approx(7.0 / 9.5, rel=1e-15)


def test_gear_losses_raise_motor_torque(veh):
    cyc = DriveCycle.constant(90.0, duration=5.0)
    lossless = demand_trace(cyc, veh)
    geared = demand_trace(cyc, veh, gear("gear_single_stage"))
    assert geared.motor_torque[0] > lossless.motor_torque[0]
    with pytest.raises(ConfigError):
        demand_trace(cyc, veh, gear("gear_dual_stage"))


def test_braking_uses_regen_fraction(veh):
    cyc = DriveCycle.from_kmh([0.0, 1.0], [50.0, 40.0])
    trace = demand_trace(cyc, veh)
    assert trace.braking[0]
    assert trace.motor_torque[0] == pytest.approx(veh.regen_fraction * trace.wheel_torque[0] / veh.gear_ratio)


def test_timestep_refinement_changes_energy_little(veh):
    def energy(dt):
        t = np.arange(0.0, 400.0 + dt / 2, dt)
        v = 15.0 * (1 - np.cos(2 * np.pi * t / 200.0))
        tr = demand_trace(DriveCycle(t, v), veh)
        return np.sum(np.abs(tr.motor_torque * tr.motor_speed) * tr.dt)

    a, b = energy(1.0), energy(0.5)
    assert abs(a - b) / b < 5e-3


def test_cycle_validation(tmp_path):
    with pytest.raises(ValidationError):
        DriveCycle([0.0, 1.0, 1.0], [0.0, 1.0, 2.0])
    with pytest.raises(ValidationError):
        DriveCycle([0.0, 1.0], [0.0, -1.0])
    bad = tmp_path / "bad.csv"
    bad.write_text("t,v\n0,0\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        DriveCycle.from_csv(bad)
    good = synthetic_cycle()
    good.to_csv(tmp_path / "c.csv")
    back = DriveCycle.from_csv(tmp_path / "c.csv")
    np.testing.assert_allclose(back.speed, good.speed, rtol=1e-5)


def test_wltp_trace_shape(wltp_cycle):
    assert wltp_cycle.speed[0] == 0.0
    assert wltp_cycle.duration == 1800.0
    assert np.max(wltp_cycle.speed) / KMH == pytest.approx(131.3, abs=0.05)


def test_zero_speed_run(edu, veh):
    res = run_cycle(demand_trace(DriveCycle.constant(0.0, duration=20.0), veh, edu.gear), edu)
    assert res.traction_energy == 0.0 and sum(res.loss_energy.values()) == 0.0
    assert math.isnan(res.edu_efficiency)


def test_constant_cruise_matches_single_point(edu, veh):
    bare = EDU("nogear", edu.model, None, 800.0)
    trace = demand_trace(DriveCycle.constant(70.0, duration=30.0), veh)
    res = run_cycle(trace, bare)
    sol = mtpl_solve(edu.model, trace.motor_torque[0], trace.motor_speed_rpm[0], 800.0)
    assert res.edu_efficiency == pytest.approx(sol.efficiency, rel=1e-12)
    geared = run_cycle(demand_trace(DriveCycle.constant(70.0, duration=30.0), veh, edu.gear), edu)
    assert geared.edu_efficiency == pytest.approx(cruise_efficiency(70.0, veh, edu), rel=1e-12)


def test_per_step_energy_balance_and_histogram(edu, veh):
    res = run_cycle(demand_trace(synthetic_cycle(), veh, edu.gear), edu)
    np.testing.assert_array_equal(res.input_power, res.output_power + res.loss_power)
    np.testing.assert_array_equal(res.output_power, res.shaft_power - res.losses["gearbox"])
    for mode in ("throughput", "loss"):
        h = energy_histogram(res, mode=mode)
        total = res.processed_energy if mode == "throughput" else sum(res.loss_energy.values())
        assert abs(h.total - total) <= 1e-6 * total
        assert h.normalized.max() == 1.0


def test_time_translation_invariance(edu, veh):
    cyc = synthetic_cycle()
    shifted = DriveCycle(cyc.time + 100.0, cyc.speed)
    a = run_cycle(demand_trace(cyc, veh, edu.gear), edu)
    b = run_cycle(demand_trace(shifted, veh, edu.gear), edu)
    assert a.edu_efficiency == b.edu_efficiency
    assert a.loss_energy == b.loss_energy


def test_cruise_points(edu, veh):
    with pytest.raises(DomainError):
        cruise_efficiency(0.0, veh, edu)
    t70 = demand_trace(DriveCycle.constant(70.0, duration=1.0), veh, edu.gear)
    t130 = demand_trace(DriveCycle.constant(130.0, duration=1.0), veh, edu.gear)
    assert (t130.motor_torque * t130.motor_speed)[0] > (t70.motor_torque * t70.motor_speed)[0]
    assert 0 < cruise_efficiency(130.0, veh, edu) < 1


def test_excessive_clipping_raises(edu, veh):
    t = np.arange(0.0, 6.0)
    cyc = DriveCycle.from_kmh(t, np.minimum(t * 40.0, 200.0))
    with pytest.raises(CycleError):
        run_cycle(demand_trace(cyc, veh, edu.gear), edu)


def _synthetic_result(torque, rpm, dt):
    n = len(torque)
    omega = np.asarray(rpm) * 2 * np.pi / 60
    shaft = np.asarray(torque) * omega
    losses = {c: np.zeros(n) for c in COMPONENTS}
    return CycleResult(np.cumsum(dt) - dt[0], np.asarray(dt, float), np.asarray(torque, float),
                       np.asarray(torque, float), omega, np.zeros(n), losses, shaft, shaft, shaft,
                       np.zeros(n, bool), 0.0, 0.0)


def test_histogram_single_segment():
    res = _synthetic_result([100.0] * 5, [3000.0] * 5, np.ones(5))
    h = energy_histogram(res, 4, 4)
    assert np.count_nonzero(h.energy) == 1
    assert h.normalized.max() == 1.0
    assert h.total == pytest.approx(res.processed_energy, rel=1e-12)


def test_histogram_two_equal_segments():
    res = _synthetic_result([100.0, 100.0, 50.0, 50.0], [3000.0, 3000.0, 6000.0, 6000.0], np.ones(4))
    h = energy_histogram(res, 4, 4)
    nz = h.normalized[h.energy > 0]
    assert sorted(nz.tolist()) == [1.0, 1.0]
    assert h.energy[h.energy > 0][0] == pytest.approx(h.total / 2)
    (t1, s1, e1), (t2, s2, e2) = h.hotspots(2)
    assert e1 == e2 and {s1 < s2, s2 < s1} == {True, False}
