"""Platform-independent control engine plus the vehicle actuator mapper.

The engine runs single-loop PID blocks for heading, speed and roll, and a
two-loop (depth -> pitch) cascade, all producing *correctives* -- values in
the same units as actuator commands.  The mapper distributes correctives to
the four stern surfaces with cross-mixing at non-zero roll:

    uppr_rudd = psi_c cos(phi) - theta_c sin(phi) + phi_c
    lowr_rudd = psi_c cos(phi) - theta_c sin(phi) - phi_c
    port_elev = psi_c sin(phi) + theta_c cos(phi) - phi_c
    stbd_elev = psi_c sin(phi) + theta_c cos(phi) + phi_c

so that the body moments produced by the rudder/elevator pairs rotate back
into pure heading and pitch responses regardless of roll, while the +/-
phi_c differential rights the vehicle.  The forward morphing fins deploy on
large heading error (>30 deg), articulate opposite the rudder while
deployed, and retract once the error falls below 5 deg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional

from .angles import heading_error_deg

ROLL_CORR_LIMIT = math.radians(5.0)    # roll-corrective surface offset cap
STERN_LIMIT = math.radians(15.0)
FIN_ANGLE_LIMIT = math.radians(20.0)
FIN_DEPLOY_ERROR_DEG = 30.0
FIN_RETRACT_ERROR_DEG = 5.0


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    i_limit: float = 0.0     # integrator clamp (same units as output)
    out_limit: float = 0.0   # output clamp; 0 disables

    def __post_init__(self) -> None:
        if self.i_limit < 0.0 or self.out_limit < 0.0:
            raise ValueError("PID limits must be non-negative")


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    primed: bool = False   # derivative needs one sample of history

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = 0.0
        self.primed = False


def pid_step(gains: PidGains, error: float, dt: float, state: PidState) -> float:
    """One PID update with clamped integrator and clamped output.

    Angle-loop callers wrap the error to the shortest arc before calling.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    state.integral += error * dt
    if gains.i_limit > 0.0:
        state.integral = max(-gains.i_limit, min(gains.i_limit, state.integral))
    derivative = (error - state.prev_error) / dt if state.primed else 0.0
    state.prev_error = error
    state.primed = True
    out = gains.kp * error + gains.ki * state.integral + gains.kd * derivative
    if gains.out_limit > 0.0:
        out = max(-gains.out_limit, min(gains.out_limit, out))
    return out


@dataclass(frozen=True)
class ControlCorrectives:
    """Outputs of the PID stage; roll corrective capped at +/-5 deg."""

    psi_corr: float = 0.0    # rad
    theta_corr: float = 0.0  # rad
    phi_corr: float = 0.0    # rad, |.| <= 5 deg
    speed_corr: float = 0.0  # thrust percent

    def __post_init__(self) -> None:
        clamped = max(-ROLL_CORR_LIMIT, min(ROLL_CORR_LIMIT, self.phi_corr))
        object.__setattr__(self, "phi_corr", clamped)


@dataclass(frozen=True)
class SternAngles:
    uppr_rudd: float
    lowr_rudd: float
    port_elev: float
    stbd_elev: float


def map_correctives(corr: ControlCorrectives, phi: float) -> SternAngles:
    """Distribute correctives to the four stern surfaces at roll angle phi."""
    cphi, sphi = math.cos(phi), math.sin(phi)
    rud = corr.psi_corr * cphi - corr.theta_corr * sphi
    elv = corr.psi_corr * sphi + corr.theta_corr * cphi
    clamp = lambda a: max(-STERN_LIMIT, min(STERN_LIMIT, a))
    return SternAngles(
        uppr_rudd=clamp(rud + corr.phi_corr),
        lowr_rudd=clamp(rud - corr.phi_corr),
        port_elev=clamp(elv - corr.phi_corr),
        stbd_elev=clamp(elv + corr.phi_corr),
    )


@dataclass(frozen=True)
class FinCommand:
    deploy: bool
    fin_angle: float  # rad


def morphing_logic(heading_error: float, deployed: bool,
                   rudder_cmd: float) -> FinCommand:
    """Hysteresis band for the morphing fins.

    Error above 30 deg deploys, below 5 deg retracts, in between holds the
    current state.  While commanded deployed the fins mirror the rudder
    with opposite sign.
    """
    err = abs(heading_error)
    if err > FIN_DEPLOY_ERROR_DEG:
        deploy = True
    elif err < FIN_RETRACT_ERROR_DEG:
        deploy = False
    else:
        deploy = deployed
    angle = max(-FIN_ANGLE_LIMIT, min(FIN_ANGLE_LIMIT, -rudder_cmd))
    return FinCommand(deploy=deploy, fin_angle=angle if deploy else 0.0)


def thrust_map(speed_corr: float) -> tuple[float, float]:
    """Clamp a thrust corrective to [0, 100] percent plus normalized form."""
    pct = max(0.0, min(100.0, speed_corr))
    return pct, pct / 100.0


# ---------------------------------------------------------------------------
# IMU mount-offset correction
# ---------------------------------------------------------------------------

@dataclass
class ImuOffsets:
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0


def capture_offset(current_phi: float, current_theta: float,
                   current_psi: float) -> ImuOffsets:
    """Record mount offsets with the vehicle held in the reference pose
    (nose to north, zero roll and pitch)."""
    return ImuOffsets(phi=current_phi, theta=current_theta, psi=current_psi)


def imu_offset_correct(phi: float, theta: float, psi: float,
                       offsets: ImuOffsets) -> tuple[float, float, float]:
    return phi - offsets.phi, theta - offsets.theta, psi - offsets.psi


def save_offsets(offsets: ImuOffsets, path: Path) -> None:
    path = Path(path)
    path.write_text(
        f"phi={offsets.phi!r}\ntheta={offsets.theta!r}\npsi={offsets.psi!r}\n")


def load_offsets(path: Path) -> ImuOffsets:
    """Load persisted offsets; a missing file means zero offsets."""
    path = Path(path)
    if not path.exists():
        return ImuOffsets()
    values = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        values[key.strip()] = float(val)
    return ImuOffsets(phi=values.get("phi", 0.0), theta=values.get("theta", 0.0),
                      psi=values.get("psi", 0.0))


# ---------------------------------------------------------------------------
# control engine
# ---------------------------------------------------------------------------

LOOPS = ("heading", "speed", "roll", "depth", "pitch")

ModeGainSet = Dict[str, Dict[str, PidGains]]


@dataclass(frozen=True)
class DesiredState:
    heading_deg: float = 0.0
    speed: float = 0.0          # m/s
    depth: float = 0.0          # m
    glide_angle_deg: Optional[float] = None  # set in glide mode


@dataclass(frozen=True)
class EngineCommand:
    correctives: ControlCorrectives
    stern: SternAngles
    fin: FinCommand
    thrust_pct: float
    thrust_normalized: float


class ControlEngine:
    """Mode-switched PID stack producing actuator commands each tick.

    Gain-set switches and runtime gain updates take effect at the start of
    the next tick and reset the loop integrators, so one tick always runs
    with exactly one consistent gain set.
    """

    def __init__(self, gain_sets: ModeGainSet, mode: str = "cruise",
                 offsets: Optional[ImuOffsets] = None,
                 pitch_limit: float = math.radians(25.0),
                 speed_to_thrust_pct: float = 50.0,
                 roll_compensation: bool = True) -> None:
        if mode not in gain_sets:
            raise ValueError(f"unknown control mode {mode!r}")
        for set_name, loops in gain_sets.items():
            missing = [loop for loop in LOOPS if loop not in loops]
            if missing:
                raise ValueError(f"gain set {set_name!r} missing loops {missing}")
        self.gain_sets = {m: dict(loops) for m, loops in gain_sets.items()}
        self.mode = mode
        self.offsets = offsets or ImuOffsets()
        self.pitch_limit = pitch_limit
        self.speed_to_thrust_pct = speed_to_thrust_pct
        self.roll_compensation = roll_compensation
        self.states = {loop: PidState() for loop in LOOPS}
        self.fin_deployed = False
        self._pending_gains: Dict[str, float] = {}
        self._pending_mode: Optional[str] = None

    # -- runtime reconfiguration -------------------------------------------

    def request_gain_update(self, name: str, value: float) -> None:
        """Queue e.g. ('heading_kp', 0.8); applied at the next tick start."""
        loop, _, param = name.rpartition("_")
        if loop not in LOOPS or param not in ("kp", "ki", "kd"):
            raise ValueError(f"unknown gain name {name!r}")
        self._pending_gains[name] = value

    def request_mode(self, mode: str) -> None:
        if mode not in self.gain_sets:
            raise ValueError(f"unknown control mode {mode!r}")
        self._pending_mode = mode

    def _apply_pending(self) -> None:
        changed = False
        if self._pending_mode is not None and self._pending_mode != self.mode:
            self.mode = self._pending_mode
            changed = True
        self._pending_mode = None
        for name, value in self._pending_gains.items():
            loop, _, param = name.rpartition("_")
            gains = self.gain_sets[self.mode][loop]
            self.gain_sets[self.mode][loop] = replace(gains, **{param: value})
            changed = True
        self._pending_gains.clear()
        if changed:
            for state in self.states.values():
                state.reset()

    # -- cascaded loops ------------------------------------------------------

    def depth_cascade(self, desired_depth: float, depth: float, theta: float,
                      dt: float,
                      glide_angle_deg: Optional[float] = None) -> float:
        """Two-loop depth control: depth error -> desired pitch -> pitch
        corrective.  In glide mode the outer loop is bypassed and the
        commanded glide angle is the desired pitch."""
        gains = self.gain_sets[self.mode]
        if glide_angle_deg is not None:
            desired_pitch = math.radians(glide_angle_deg)
        else:
            # positive depth error (too shallow) pitches the nose down
            depth_error = desired_depth - depth
            desired_pitch = -pid_step(gains["depth"], depth_error, dt,
                                      self.states["depth"])
        desired_pitch = max(-self.pitch_limit, min(self.pitch_limit,
                                                   desired_pitch))
        return pid_step(gains["pitch"], desired_pitch - theta, dt,
                        self.states["pitch"])

    def tick(self, desired: DesiredState, raw_phi: float, raw_theta: float,
             raw_psi: float, depth: float, speed: float, dt: float,
             enabled: bool = True) -> EngineCommand:
        self._apply_pending()
        phi, theta, psi = imu_offset_correct(raw_phi, raw_theta, raw_psi,
                                             self.offsets)
        if not enabled:
            for state in self.states.values():
                state.reset()
            self.fin_deployed = False
            return EngineCommand(ControlCorrectives(),
                                 SternAngles(0.0, 0.0, 0.0, 0.0),
                                 FinCommand(False, 0.0), 0.0, 0.0)

        gains = self.gain_sets[self.mode]
        err_deg = heading_error_deg(desired.heading_deg, math.degrees(psi))
        psi_corr = pid_step(gains["heading"], math.radians(err_deg), dt,
                            self.states["heading"])
        theta_corr = self.depth_cascade(desired.depth, depth, theta, dt,
                                        desired.glide_angle_deg)
        phi_corr = pid_step(gains["roll"], 0.0 - phi, dt, self.states["roll"])
        speed_ff = desired.speed * self.speed_to_thrust_pct
        speed_corr = speed_ff + pid_step(gains["speed"], desired.speed - speed,
                                         dt, self.states["speed"])
        corr = ControlCorrectives(psi_corr=psi_corr, theta_corr=theta_corr,
                                  phi_corr=phi_corr, speed_corr=speed_corr)
        stern = map_correctives(corr, phi if self.roll_compensation else 0.0)
        rudder_mean = 0.5 * (stern.uppr_rudd + stern.lowr_rudd)
        fin = morphing_logic(err_deg, self.fin_deployed, rudder_mean)
        self.fin_deployed = fin.deploy
        thrust_pct, thrust_norm = thrust_map(corr.speed_corr)
        return EngineCommand(corr, stern, fin, thrust_pct, thrust_norm)
