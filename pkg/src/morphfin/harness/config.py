"""Configuration loading: key=value files with section headers (INI style)
for the vehicle and for scenarios.

Paths beginning with ``builtin:`` resolve against the package's shipped
data directory, so the checked-in defaults work without any external
files.  Loading the vehicle config runs the stability self-check: the bare
hull must be unstable, the rudder must stabilize it, and the fin station
must fall inside the bare-hull placement window.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from ..control import ModeGainSet, PidGains
from ..helm import SafetyEnvelope
from ..hydro import (
    Appendage,
    AppendageKind,
    HydroConfig,
    fin_placement_valid,
    stability_index,
    with_rudder,
)
from ..nav import ModelParams, NavConfig
from ..plant import Environment, PlantParams, SensorNoise


class ConfigError(ValueError):
    """Bad or inconsistent configuration (CLI exit code 2)."""


def resolve_path(ref: str, relative_to: Optional[Path] = None) -> Path:
    if ref.startswith("builtin:"):
        base = resources.files("morphfin").joinpath("data")
        return Path(str(base.joinpath(ref[len("builtin:"):])))
    path = Path(ref)
    if not path.is_absolute() and relative_to is not None:
        path = relative_to / path
    return path


def _read_ini(path: Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser.read(path)
    return parser


def _gains(section: configparser.SectionProxy) -> PidGains:
    out_limit = section.getfloat("out_limit", fallback=None)
    if out_limit is None:
        out_deg = section.getfloat("out_limit_deg", fallback=0.0)
        out_limit = math.radians(out_deg)
    return PidGains(
        kp=section.getfloat("kp", 0.0),
        ki=section.getfloat("ki", 0.0),
        kd=section.getfloat("kd", 0.0),
        i_limit=section.getfloat("i_limit", 0.0),
        out_limit=out_limit,
    )


@dataclass
class VehicleConfig:
    hydro: HydroConfig
    rudder: Appendage
    fin: Appendage
    plant_params: PlantParams
    gain_sets: ModeGainSet
    envelope: SafetyEnvelope
    nav: NavConfig
    model_params: ModelParams
    pct_per_mps: float
    pitch_limit: float
    source_path: Path


def load_vehicle_config(ref: str = "builtin:morpheus.cfg",
                        relative_to: Optional[Path] = None) -> VehicleConfig:
    path = resolve_path(ref, relative_to)
    ini = _read_ini(path)
    try:
        mass = ini["mass"]
        hyd = ini["hydro"]
        hydro = HydroConfig(
            m=mass.getfloat("m"), izz=mass.getfloat("izz"),
            xg=mass.getfloat("xg"), rho=mass.getfloat("rho", 1000.0),
            yv_dot=hyd.getfloat("yv_dot"), yr_dot=hyd.getfloat("yr_dot"),
            nv_dot=hyd.getfloat("nv_dot"), nr_dot=hyd.getfloat("nr_dot"),
            yv=hyd.getfloat("yv"), yr=hyd.getfloat("yr"),
            nv=hyd.getfloat("nv"), nr=hyd.getfloat("nr"),
        )
        rudder = Appendage(
            AppendageKind.RUDDER,
            lift_per_angle=ini["rudder"].getfloat("lift_per_angle"),
            station=ini["rudder"].getfloat("station"),
            area=ini["rudder"].getfloat("area", 0.0),
            cl_alpha=ini["rudder"].getfloat("cl_alpha", 0.0),
            u_ref=ini["rudder"].getfloat("u_ref", 1.5),
        )
        fin = Appendage(
            AppendageKind.FIN,
            lift_per_angle=ini["fin"].getfloat("lift_per_angle"),
            station=ini["fin"].getfloat("station"),
            area=ini["fin"].getfloat("area", 0.0),
            cl_alpha=ini["fin"].getfloat("cl_alpha", 0.0),
            u_ref=ini["fin"].getfloat("u_ref", 1.5),
        )
        surge = ini["surge"]
        pitch = ini["pitch"]
        roll = ini["roll"]
        act = ini["actuators"]
        health = ini["health"]
        params = PlantParams(
            k_thrust=surge.getfloat("k_thrust"),
            k_drag=surge.getfloat("k_drag"),
            k_turn_drag=surge.getfloat("k_turn_drag"),
            r_sat=surge.getfloat("r_sat", 0.31),
            rpm_per_pct=surge.getfloat("rpm_per_pct"),
            u_ref=surge.getfloat("u_ref", 1.5),
            iyy_eff=pitch.getfloat("iyy_eff"),
            k_elev=pitch.getfloat("k_elev"),
            k_q_damp=pitch.getfloat("k_q_damp"),
            k_pitch_rest=pitch.getfloat("k_pitch_rest"),
            ixx_eff=roll.getfloat("ixx_eff"),
            k_roll_rest=roll.getfloat("k_roll_rest"),
            k_p_damp=roll.getfloat("k_p_damp"),
            k_roll_surf=roll.getfloat("k_roll_surf"),
            fixed_fin_counter=math.radians(
                roll.getfloat("fixed_fin_counter_deg", 0.0)),
            k_yaw_swirl=roll.getfloat("k_yaw_swirl", 0.0),
            surface_slew=math.radians(act.getfloat("surface_slew_deg", 60.0)),
            fin_deploy_time=act.getfloat("fin_deploy_time", 1.0),
            fin_angle_slew=math.radians(act.getfloat("fin_angle_slew_deg", 120.0)),
            current_per_pct=health.getfloat("current_per_pct", 0.04),
            battery_drain=health.getfloat("battery_drain", 2.0e-4),
        )
        gain_sets: ModeGainSet = {}
        for name in ini.sections():
            if name.startswith("gains."):
                _, mode, loop = name.split(".", 2)
                gain_sets.setdefault(mode, {})[loop] = _gains(ini[name])
        saf = ini["safety"]
        envelope = SafetyEnvelope(
            max_depth=saf.getfloat("max_depth"),
            max_cruise_depth=saf.getfloat("max_cruise_depth"),
            min_voltage=saf.getfloat("min_voltage"),
            max_current=saf.getfloat("max_current"),
            max_internal_pressure=saf.getfloat("max_internal_pressure"),
            actuator_engage_delay=saf.getfloat("actuator_engage_delay"),
            mission_end_time=saf.getfloat("mission_end_time"),
        )
        nav_sec = ini["nav"]
        nav = NavConfig(
            sigma_fix=nav_sec.getfloat("sigma_fix", 1.0),
            sigma_depth=nav_sec.getfloat("sigma_depth", 0.05),
            sigma_dvl=nav_sec.getfloat("sigma_dvl", 0.05),
            model_sigma0=nav_sec.getfloat("model_sigma0", 0.2),
            gate_k=nav_sec.getfloat("gate_k", 5.0),
            bias_tau=nav_sec.getfloat("bias_tau", 300.0),
            calib_tau=nav_sec.getfloat("calib_tau", 15.0),
            reinit_mult=nav_sec.getfloat("reinit_mult", 10.0),
            reinit_floor=nav_sec.getfloat("reinit_floor", 5.0),
            depth_max_rate=nav_sec.getfloat("depth_max_rate", 5.0),
            depth_window=nav_sec.getint("depth_window", 20),
        )
        model_sec = ini["model"]
        model = ModelParams(
            alpha=np.array([float(v) for v in model_sec.get("alpha").split()]),
            beta=np.array([float(v) for v in model_sec.get("beta").split()]),
            gamma=np.array([float(v) for v in model_sec.get("gamma").split()]),
            lam=model_sec.getfloat("lambda", 0.995),
        )
        cfg = VehicleConfig(
            hydro=hydro, rudder=rudder, fin=fin, plant_params=params,
            gain_sets=gain_sets, envelope=envelope, nav=nav,
            model_params=model,
            pct_per_mps=ini["speed_map"].getfloat("pct_per_mps", 50.0),
            pitch_limit=math.radians(
                ini["limits"].getfloat("pitch_limit_deg", 25.0)),
            source_path=path,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _stability_self_check(cfg)
    return cfg


def _stability_self_check(cfg: VehicleConfig) -> None:
    """The shipped configuration doctrine: unstable bare hull, stabilized by
    the stern rudder, with the fin inside the bare-hull placement window."""
    u = cfg.plant_params.u_ref
    c_bare = stability_index(cfg.hydro, u)
    if c_bare >= 0.0:
        raise ConfigError(
            f"bare hull must be directionally unstable (C={c_bare:.4g})")
    c_rudder = stability_index(with_rudder(cfg.hydro, cfg.rudder, u), u)
    if c_rudder <= 0.0:
        raise ConfigError(
            f"rudder fails to stabilize the hull (C={c_rudder:.4g})")
    if not fin_placement_valid(cfg.fin.station, cfg.hydro, u):
        raise ConfigError(
            f"fin station {cfg.fin.station} outside the placement window")


@dataclass
class Scenario:
    vehicle: VehicleConfig
    env: Environment
    mission_text: str
    mission_ref: str
    duration: float
    seed: int
    fins: str                  # on | off | auto
    nav_mode: str              # hydroman | truth
    start_heading_deg: float
    start_depth: float
    source_path: Optional[Path] = None
    payload_port: Optional[int] = None

    def __post_init__(self) -> None:
        if self.duration < 0.0:
            raise ConfigError("scenario duration must be non-negative")
        if self.fins not in ("on", "off", "auto"):
            raise ConfigError(f"bad fins mode {self.fins!r}")
        if self.nav_mode not in ("hydroman", "truth"):
            raise ConfigError(f"bad nav mode {self.nav_mode!r}")


def load_scenario(ref: str = "builtin:zigzag.cfg",
                  fins: Optional[str] = None,
                  seed: Optional[int] = None,
                  nav_mode: Optional[str] = None) -> Scenario:
    path = resolve_path(ref)
    ini = _read_ini(path)
    try:
        sc = ini["scenario"]
        env_sec = ini["environment"]
        vehicle = load_vehicle_config(sc.get("vehicle", "builtin:morpheus.cfg"),
                                      relative_to=path.parent)
        mission_ref = sc.get("mission", "builtin:missions/zigzag.mission")
        mission_path = resolve_path(mission_ref, relative_to=path.parent)
        if not mission_path.exists():
            raise ConfigError(f"mission file not found: {mission_path}")
        env = Environment(
            current_n=env_sec.getfloat("current_n", 0.0),
            current_e=env_sec.getfloat("current_e", 0.0),
            water_density=env_sec.getfloat("water_density", 1000.0),
            prop_torque_roll=math.radians(
                env_sec.getfloat("prop_torque_roll_deg", 0.0)),
            lbl_latency=env_sec.getfloat("lbl_latency", 20.0),
            lbl_interval=env_sec.getfloat("lbl_interval", 0.0),
            dvl_enabled=env_sec.getboolean("dvl_enabled", False),
            gps_surface_threshold=env_sec.getfloat("gps_surface_threshold", 0.5),
            noise=SensorNoise(
                depth=env_sec.getfloat("noise_depth", 0.0),
                imu_att=env_sec.getfloat("noise_imu_att", 0.0),
                imu_rate=env_sec.getfloat("noise_imu_rate", 0.0),
                gps=env_sec.getfloat("noise_gps", 0.0),
                lbl=env_sec.getfloat("noise_lbl", 0.0),
                dvl=env_sec.getfloat("noise_dvl", 0.0),
            ),
            leak_rate=env_sec.getfloat("leak_rate", 0.0),
        )
        scenario = Scenario(
            vehicle=vehicle,
            env=env,
            mission_text=mission_path.read_text(),
            mission_ref=str(mission_ref),
            duration=sc.getfloat("duration", 120.0),
            seed=seed if seed is not None else sc.getint("seed", 0),
            fins=fins if fins is not None else sc.get("fins", "auto"),
            nav_mode=nav_mode if nav_mode is not None else sc.get("nav", "hydroman"),
            start_heading_deg=sc.getfloat("start_heading_deg", 0.0),
            start_depth=sc.getfloat("start_depth", 1.5),
            source_path=path,
            payload_port=sc.getint("payload_port", fallback=None),
        )
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return scenario
