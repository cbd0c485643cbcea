"""Plant (truth model) tests: dynamics vs the analytic steady state,
actuator slewing, sensing, health and determinism."""

import math
from dataclasses import replace

import numpy as np
import pytest

from morphfin.hydro import (
    Appendage,
    AppendageKind,
    HydroConfig,
    steady_yaw_rate,
    with_fin,
    with_rudder,
)
from morphfin.measurements import DepthMeas, GpsFix, ImuMeas, LblFix
from morphfin.plant import (
    ActuatorSet,
    BodyState,
    Environment,
    Plant,
    PlantAbort,
    PlantConfigError,
    PlantParams,
    SensorNoise,
    VehicleHealth,
)

DT = 0.05
CRUISE_THRUST = 75.0   # k_drag * 1.5 / k_thrust with the default params


def stable_config() -> HydroConfig:
    return HydroConfig(m=8.7, izz=0.55, xg=0.0, yv_dot=-8.6, yr_dot=-0.05,
                       nv_dot=-0.05, nr_dot=-0.6, yv=-10.0, yr=1.0, nv=-1.0,
                       nr=-2.0)


def stern_rudder(lift: float = -8.0) -> Appendage:
    return Appendage(AppendageKind.RUDDER, lift, -0.42, u_ref=1.5)


def make_plant(env: Environment | None = None, seed: int = 0,
               state: BodyState | None = None, fin: Appendage | None = None,
               params: PlantParams | None = None) -> Plant:
    return Plant(stable_config(), stern_rudder(), fin,
                 params or PlantParams(), env or Environment(), seed=seed,
                 state=state)


def run_plant(plant: Plant, act: ActuatorSet, seconds: float) -> BodyState:
    for _ in range(int(round(seconds / DT))):
        plant.step(act, DT)
    return plant.state


def cruise_state() -> BodyState:
    return BodyState(u=1.5, z=2.0)


def test_zero_forcing_straight_track():
    plant = make_plant(state=cruise_state())
    act = ActuatorSet(thrust_pct=CRUISE_THRUST)
    st = run_plant(plant, act, 20.0)
    assert st.psi == pytest.approx(0.0, abs=1e-12)
    assert st.v == pytest.approx(0.0, abs=1e-12)
    assert st.r == pytest.approx(0.0, abs=1e-12)
    assert st.y == pytest.approx(0.0, abs=1e-9)
    assert st.x > 25.0


def test_steady_yaw_rate_matches_analytic_within_1pct():
    plant = make_plant(state=cruise_state())
    delta = math.radians(2.0)
    act = ActuatorSet(uppr_rudd=delta, lowr_rudd=delta,
                      thrust_pct=CRUISE_THRUST)
    st = run_plant(plant, act, 60.0)
    u_ss = st.u
    rud = stern_rudder()
    rud_at_u = Appendage(AppendageKind.RUDDER, rud.lift_at(u_ss), rud.station,
                         u_ref=u_ss)
    composed = with_rudder(stable_config(), rud_at_u, u_ss)
    r_analytic = steady_yaw_rate(composed, rud_at_u, None, delta, u_ss)
    assert st.r == pytest.approx(r_analytic, rel=0.01)


def test_steady_yaw_rate_matches_analytic_away_from_reference_speed():
    # cruise at ~0.8 m/s: the appendage lift composition must rescale with
    # speed or the passive damping is wildly overestimated
    plant = make_plant(state=BodyState(u=0.8, z=2.0))
    delta = math.radians(2.0)
    thrust = plant.params.k_drag * 0.8 / plant.params.k_thrust
    act = ActuatorSet(uppr_rudd=delta, lowr_rudd=delta, thrust_pct=thrust)
    st = run_plant(plant, act, 60.0)
    u_ss = st.u
    rud = stern_rudder()
    rud_at_u = Appendage(AppendageKind.RUDDER, rud.lift_at(u_ss), rud.station,
                         u_ref=u_ss)
    composed = with_rudder(stable_config(), rud_at_u, u_ss)
    r_analytic = steady_yaw_rate(composed, rud_at_u, None, delta, u_ss)
    assert st.r == pytest.approx(r_analytic, rel=0.01)


def test_halving_delta_halves_yaw_rate_within_1pct():
    rates = {}
    for deg in (2.0, 1.0):
        plant = make_plant(state=cruise_state())
        delta = math.radians(deg)
        act = ActuatorSet(uppr_rudd=delta, lowr_rudd=delta,
                          thrust_pct=CRUISE_THRUST)
        rates[deg] = run_plant(plant, act, 60.0).r
    assert rates[2.0] == pytest.approx(2.0 * rates[1.0], rel=0.01)


def test_sway_and_yaw_decay_after_forcing_removed():
    # envelope decay: with forcing removed the per-window peaks of |v| and
    # |r| fall strictly window over window and both settle to zero
    plant = make_plant(state=cruise_state())
    delta = math.radians(10.0)
    act = ActuatorSet(uppr_rudd=delta, lowr_rudd=delta,
                      thrust_pct=CRUISE_THRUST)
    run_plant(plant, act, 30.0)
    neutral = ActuatorSet(thrust_pct=CRUISE_THRUST)
    trace = [plant.step(neutral, DT) for _ in range(600)]
    window = 40  # 2 s
    peaks_v = [max(abs(s.v) for s in trace[i:i + window])
               for i in range(0, 600, window)]
    peaks_r = [max(abs(s.r) for s in trace[i:i + window])
               for i in range(0, 600, window)]
    assert all(b < a for a, b in zip(peaks_v, peaks_v[1:]))
    assert all(b < a for a, b in zip(peaks_r, peaks_r[1:]))
    assert peaks_v[-1] < 1e-4 and peaks_r[-1] < 1e-4


def test_starboard_turns_faster_than_port_with_prop_torque():
    rates = {}
    env = Environment(prop_torque_roll=math.radians(20.0))
    for sign in (+1.0, -1.0):
        plant = make_plant(env=env, state=cruise_state())
        delta = sign * math.radians(10.0)
        act = ActuatorSet(uppr_rudd=delta, lowr_rudd=delta,
                          thrust_pct=CRUISE_THRUST)
        rates[sign] = run_plant(plant, act, 40.0).r
    assert abs(rates[+1.0]) - abs(rates[-1.0]) > 0.0


def test_rejects_bad_dt():
    plant = make_plant()
    with pytest.raises(ValueError):
        plant.step(ActuatorSet(), 0.2)
    with pytest.raises(ValueError):
        plant.step(ActuatorSet(), 0.0)


def test_singular_mass_matrix_rejected():
    cfg = replace(stable_config(), yv_dot=8.7)  # m - yv_dot = 0
    with pytest.raises(PlantConfigError):
        Plant(cfg, stern_rudder(), None, PlantParams(), Environment())


def test_nonfinite_state_aborts():
    plant = make_plant()
    plant.state = BodyState(u=float("nan"))
    with pytest.raises(PlantAbort):
        plant.step(ActuatorSet(), DT)


# -- actuator dynamics -------------------------------------------------------

def test_actuator_hold_when_command_equals_actual():
    plant = make_plant()
    actual = ActuatorSet(uppr_rudd=0.1, lowr_rudd=0.1, fin_deploy=1.0,
                         fin_angle=0.2, thrust_pct=50.0, rpm=2000.0)
    out = plant.actuator_dynamics(actual, actual, DT)
    assert out.uppr_rudd == actual.uppr_rudd
    assert out.fin_angle == actual.fin_angle
    assert out.fin_deploy == actual.fin_deploy


def test_surface_slew_rate_limit():
    plant = make_plant()
    cmd = ActuatorSet(uppr_rudd=math.radians(15.0))
    actual = ActuatorSet()
    ticks = 0
    while actual.uppr_rudd < math.radians(15.0) - 1e-12:
        prev = actual.uppr_rudd
        actual = plant.actuator_dynamics(cmd, actual, DT)
        step = actual.uppr_rudd - prev
        assert step <= math.radians(60.0) * DT + 1e-12
        ticks += 1
    # 15 deg at 60 deg/s and 0.05 s ticks: 3 deg per tick, 5 ticks = 0.25 s
    assert ticks == 5


def test_fin_angle_gated_until_fully_deployed():
    plant = make_plant()
    cmd = ActuatorSet(fin_deploy=1.0, fin_angle=math.radians(15.0))
    actual = ActuatorSet(fin_deploy=0.5)
    out = plant.actuator_dynamics(cmd, actual, DT)
    assert out.fin_angle == 0.0
    while out.fin_deploy < 1.0:
        out = plant.actuator_dynamics(cmd, out, DT)
        if out.fin_deploy < 1.0:
            assert out.fin_angle == 0.0
    out = plant.actuator_dynamics(cmd, out, DT)
    assert out.fin_angle > 0.0


def test_commands_clamped_to_limits():
    plant = make_plant()
    cmd = ActuatorSet(uppr_rudd=math.radians(40.0), thrust_pct=150.0,
                      fin_angle=math.radians(45.0), fin_deploy=2.0)
    actual = ActuatorSet(fin_deploy=1.0)
    for _ in range(100):
        actual = plant.actuator_dynamics(cmd, actual, DT)
    assert actual.uppr_rudd == pytest.approx(math.radians(15.0))
    assert actual.fin_angle == pytest.approx(math.radians(20.0))
    assert actual.thrust_pct == 100.0
    assert actual.fin_deploy == 1.0


# -- sensing ------------------------------------------------------------------

def test_zero_noise_measurements_equal_truth():
    plant = make_plant(state=BodyState(u=1.2, z=3.0, psi=0.5))
    meas = plant.sense(0.0, ActuatorSet(thrust_pct=50.0))
    depth = next(m for m in meas if isinstance(m, DepthMeas))
    imu = next(m for m in meas if isinstance(m, ImuMeas))
    assert depth.z == 3.0
    assert imu.psi == 0.5
    assert imu.r == 0.0


def test_gps_only_on_surface():
    shallow = make_plant(state=BodyState(z=0.2))
    deep = make_plant(state=BodyState(z=5.0))
    assert any(isinstance(m, GpsFix) for m in shallow.sense(0.0, ActuatorSet()))
    assert not any(isinstance(m, GpsFix) for m in deep.sense(0.0, ActuatorSet()))


def test_lbl_fix_lags_truth_by_latency_times_speed():
    env = Environment(lbl_latency=20.0, lbl_interval=10.0)
    plant = make_plant(env=env, state=BodyState(u=1.6, z=2.0))
    params = plant.params
    thrust = params.k_drag * 1.6 / params.k_thrust
    act = ActuatorSet(thrust_pct=thrust)
    fixes = []
    t = 0.0
    for _ in range(int(60.0 / DT)):
        fixes += [m for m in plant.sense(t, act) if isinstance(m, LblFix)]
        plant.step(act, DT)
        t += DT
    assert fixes
    last = fixes[-1]
    truth_x = 1.6 * last.t_rx
    assert last.t_rx - last.t_n == pytest.approx(20.0)
    assert truth_x - last.x == pytest.approx(32.0, rel=0.02)


def test_sense_determinism_under_seed():
    env = Environment(noise=SensorNoise(depth=0.05, imu_att=0.01))
    a = make_plant(env=env, seed=99, state=BodyState(z=2.0))
    b = make_plant(env=env, seed=99, state=BodyState(z=2.0))
    for t in range(50):
        assert a.sense(t * DT, ActuatorSet()) == b.sense(t * DT, ActuatorSet())


def test_step_determinism_under_seed():
    results = []
    for _ in range(2):
        plant = make_plant(seed=7, state=cruise_state())
        act = ActuatorSet(uppr_rudd=0.1, lowr_rudd=0.1, thrust_pct=60.0)
        results.append(run_plant(plant, act, 10.0))
    assert results[0] == results[1]


# -- health -------------------------------------------------------------------

def test_health_zero_thrust():
    plant = make_plant()
    health = VehicleHealth()
    out = plant.health_step(health, ActuatorSet(thrust_pct=0.0), DT)
    assert out.motor_current == 0.0
    assert out.battery_v == health.battery_v


def test_health_battery_drains_under_load():
    plant = make_plant()
    health = VehicleHealth()
    for _ in range(200):
        health = plant.health_step(health, ActuatorSet(thrust_pct=80.0), DT)
    assert health.motor_current > 0.0
    assert health.battery_v < VehicleHealth().battery_v


def test_leak_ramp_raises_internal_pressure():
    env = Environment(leak_rate=0.01)
    plant = make_plant(env=env)
    health = VehicleHealth()
    for _ in range(100):
        health = plant.health_step(health, ActuatorSet(), DT)
    assert health.internal_pressure == pytest.approx(
        VehicleHealth().internal_pressure + 0.01 * 100 * DT)
