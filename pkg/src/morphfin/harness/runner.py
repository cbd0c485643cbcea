"""Fixed-step scenario loop: sense -> navigate -> helm/manage -> control ->
actuate -> integrate, with every tick appended to the telemetry CSV."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from ..control import ControlEngine, DesiredState
from ..gateway import GatewayServer, MessageBus, QueueSubscriber
from ..helm import (
    FrontseatManager,
    MissionParseError,
    PassiveHelm,
    PayloadAutonomy,
    VehicleMode,
    parse_mission,
)
from ..nav import NavEngine, NavSolution
from ..plant import ActuatorSet, BodyState, Plant, PlantAbort, VehicleHealth
from .config import ConfigError, Scenario
from .metrics import ALL_COLS, RunMetrics, TELEMETRY_SCHEMA, compute_metrics, read_telemetry

DT = 0.05
SAFE_MODE_GRACE = 5.0   # s of telemetry recorded after entering safe mode

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3
EXIT_SAFETY = 4


@dataclass
class RunResult:
    csv_path: Path
    metrics_path: Path
    metrics: RunMetrics
    exit_code: int
    abort_reason: Optional[str] = None


def _fmt(value: float) -> str:
    return format(value, ".10g")


def _truth_solution(t: float, state: BodyState) -> NavSolution:
    import numpy as np
    return NavSolution(
        t=t, x=state.x, y=state.y, z=state.z,
        vn=state.u * math.cos(state.psi) - state.v * math.sin(state.psi),
        ve=state.u * math.sin(state.psi) + state.v * math.cos(state.psi),
        vd=-state.u * math.sin(state.theta),
        phi=state.phi, theta=state.theta, psi=state.psi,
        cov=np.zeros((6, 6)), status="OK",
    )


def run_scenario(scenario: Scenario, out_dir: Path,
                 tag: Optional[str] = None) -> RunResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = tag or f"run_fins_{scenario.fins}_seed{scenario.seed}"
    csv_path = out_dir / f"{name}.csv"
    metrics_path = out_dir / f"{name}.metrics.json"

    try:
        legs = parse_mission(scenario.mission_text)
    except MissionParseError as exc:
        raise ConfigError(f"mission: {exc}") from exc

    veh = scenario.vehicle
    fin = veh.fin if scenario.fins in ("on", "auto") else None
    state0 = BodyState(psi=math.radians(scenario.start_heading_deg),
                       z=scenario.start_depth)
    plant = Plant(veh.hydro, veh.rudder, fin, veh.plant_params, scenario.env,
                  seed=scenario.seed, state=state0)
    control = ControlEngine(veh.gain_sets, pitch_limit=veh.pitch_limit,
                            speed_to_thrust_pct=veh.pct_per_mps)
    helm = PassiveHelm(legs, hold_heading=scenario.start_heading_deg)
    fsm = FrontseatManager(veh.envelope)
    nav_engine: Optional[NavEngine] = None
    if scenario.nav_mode == "hydroman":
        nav_engine = NavEngine(veh.model_params, veh.nav)

    payload: Optional[PayloadAutonomy] = None
    payload_queue: Optional[QueueSubscriber] = None
    server: Optional[GatewayServer] = None
    if scenario.payload_port is not None:
        bus = MessageBus()
        payload_queue = QueueSubscriber()
        bus.subscribe("DESIRED_*", payload_queue)
        server = GatewayServer(port=scenario.payload_port, bus=bus)
        payload = PayloadAutonomy(veh.envelope)

    act = ActuatorSet()
    health = VehicleHealth()
    abort_reason: Optional[str] = None
    exit_code = EXIT_OK
    safe_entered: Optional[float] = None
    n_ticks = int(round(scenario.duration / DT))

    with csv_path.open("w", newline="") as fh:
        fh.write(f"# {TELEMETRY_SCHEMA}\n")
        fh.write(",".join(ALL_COLS) + "\n")
        try:
            for k in range(n_ticks):
                t = k * DT
                st = plant.state
                measurements = plant.sense(t, act)

                if nav_engine is not None:
                    sol = nav_engine.step(t, measurements, DT)
                    nav_events = list(nav_engine.events)
                else:
                    sol = _truth_solution(t, st)
                    nav_events = []

                fsm_out = fsm.step(t, health, sol.z)
                events = list(fsm_out.events) + nav_events

                decision = helm.step(t)
                if payload is not None and payload_queue is not None:
                    for msg in payload_queue.drain():
                        payload.ingest(msg.key, msg.value, t)
                    decision = payload.decision(
                        t, hold_heading=scenario.start_heading_deg)
                for gain_name, value in decision.gain_updates.items():
                    control.request_gain_update(gain_name, value)
                    events.append(f"GAIN_UPDATE:{gain_name}={_fmt(value)}")

                desired = DesiredState(heading_deg=decision.heading,
                                       speed=decision.speed,
                                       depth=decision.depth)
                cmd = control.tick(desired, sol.phi, sol.theta, sol.psi,
                                   sol.z, sol.speed, DT,
                                   enabled=fsm_out.actuators_enabled)

                if scenario.fins == "auto":
                    deploy_cmd = 1.0 if cmd.fin.deploy else 0.0
                    fin_angle_cmd = cmd.fin.fin_angle
                elif scenario.fins == "on":
                    deploy_cmd = 1.0 if fsm_out.actuators_enabled else 0.0
                    rudder_mean = 0.5 * (cmd.stern.uppr_rudd
                                         + cmd.stern.lowr_rudd)
                    fin_angle_cmd = -rudder_mean
                else:
                    deploy_cmd = 0.0
                    fin_angle_cmd = 0.0
                want = ActuatorSet(
                    uppr_rudd=cmd.stern.uppr_rudd,
                    lowr_rudd=cmd.stern.lowr_rudd,
                    port_elev=cmd.stern.port_elev,
                    stbd_elev=cmd.stern.stbd_elev,
                    fin_deploy=deploy_cmd,
                    fin_angle=fin_angle_cmd,
                    thrust_pct=cmd.thrust_pct,
                )
                act = plant.actuator_dynamics(want, act, DT)
                new_state = plant.step(act, DT)
                health = plant.health_step(health, act, DT)

                row = (
                    [t]
                    + [st.u, st.v, st.w, st.p, st.q, st.r, st.phi, st.theta,
                       st.psi, st.x, st.y, st.z, st.U]
                    + [sol.x, sol.y, sol.z, sol.vn, sol.ve, sol.vd,
                       sol.phi, sol.theta, sol.psi]
                    + [decision.heading, decision.speed, decision.depth]
                    + [cmd.correctives.psi_corr, cmd.correctives.theta_corr,
                       cmd.correctives.phi_corr, cmd.correctives.speed_corr]
                    + [act.uppr_rudd, act.lowr_rudd, act.port_elev,
                       act.stbd_elev, act.fin_deploy, act.fin_angle,
                       act.thrust_pct, act.rpm]
                )
                fh.write(",".join(_fmt(v) for v in row)
                         + f",{fsm_out.mode.value},{';'.join(events)}\n")

                if fsm_out.mode is VehicleMode.SAFE_MODE:
                    if safe_entered is None:
                        safe_entered = t
                    elif t - safe_entered >= SAFE_MODE_GRACE:
                        exit_code = EXIT_SAFETY
                        abort_reason = f"safe mode: {fsm_out.safe_reason}"
                        break
        except PlantAbort as exc:
            exit_code = EXIT_ABORT
            abort_reason = str(exc)
        finally:
            if server is not None:
                server.close()

    data = read_telemetry(csv_path)
    metrics = compute_metrics(data, mission_ref=scenario.mission_ref,
                              fins=scenario.fins, seed=scenario.seed)
    metrics.save(metrics_path)
    return RunResult(csv_path=csv_path, metrics_path=metrics_path,
                     metrics=metrics, exit_code=exit_code,
                     abort_reason=abort_reason)
