"""Passive helm (scripted mission legs) and the frontseat mission manager.

Missions are plain text, one directive per line:

    ADD_LEG: start_time=120, heading=180, speed=1.5, depth=1.5
    ADD_LEG: start_time=410, heading=250, speed=1.5, depth=2.0, heading_kp=0.8

Legs hold until superseded; gain keys become runtime PID updates emitted
exactly once when their leg activates.  The frontseat manager gates the
actuators behind an engage delay, leases control to the helm until the
mission end time, and drops into an absorbing safe mode on any safety
envelope violation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .plant import VehicleHealth

GAIN_KEYS = tuple(
    f"{loop}_{param}"
    for loop in ("heading", "speed", "roll", "depth", "pitch")
    for param in ("kp", "ki", "kd")
)

LEG_KEYS = ("start_time", "heading", "speed", "depth")


class MissionParseError(ValueError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class MissionLeg:
    start_time: float                 # s since mission start
    heading: float                    # deg
    speed: float                      # m/s (mapped to thrust downstream)
    depth: float                      # m
    gain_overrides: Dict[str, float] = field(default_factory=dict)


def parse_mission(text: str) -> List[MissionLeg]:
    """Parse mission text into ordered legs; '#' starts a comment."""
    legs: List[MissionLeg] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not line.upper().startswith("ADD_LEG:"):
            raise MissionParseError(line_no, f"expected ADD_LEG directive, got {raw!r}")
        body = line[len("ADD_LEG:"):]
        fields: Dict[str, float] = {}
        overrides: Dict[str, float] = {}
        for item in body.split(","):
            item = item.strip()
            if not item:
                continue
            key, sep, value = item.partition("=")
            key = key.strip().lower()
            if not sep:
                raise MissionParseError(line_no, f"expected key=value, got {item!r}")
            try:
                num = float(value.strip())
            except ValueError:
                raise MissionParseError(line_no, f"bad number for {key}: {value!r}")
            if key in LEG_KEYS:
                fields[key] = num
            elif key in GAIN_KEYS:
                overrides[key] = num
            else:
                raise MissionParseError(line_no, f"unknown key {key!r}")
        missing = [k for k in LEG_KEYS if k not in fields]
        if missing:
            raise MissionParseError(line_no, f"missing keys {missing}")
        leg = MissionLeg(start_time=fields["start_time"], heading=fields["heading"],
                         speed=fields["speed"], depth=fields["depth"],
                         gain_overrides=overrides)
        if legs and leg.start_time <= legs[-1].start_time:
            raise MissionParseError(
                line_no, f"start_time {leg.start_time} not increasing")
        legs.append(leg)
    return legs


def render_mission(legs: Sequence[MissionLeg]) -> str:
    """Inverse of parse_mission for valid leg lists."""
    lines = []
    for leg in legs:
        parts = [f"start_time={leg.start_time:g}", f"heading={leg.heading:g}",
                 f"speed={leg.speed:g}", f"depth={leg.depth:g}"]
        parts += [f"{k}={v:g}" for k, v in leg.gain_overrides.items()]
        lines.append("ADD_LEG: " + ", ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class HelmDecision:
    heading: float       # deg
    speed: float         # m/s
    depth: float         # m
    gain_updates: Dict[str, float]   # emitted once at leg activation
    leg_index: int       # -1 before the first leg


class PassiveHelm:
    """Steps through the scripted legs; emits each leg's gain updates once."""

    def __init__(self, legs: Sequence[MissionLeg],
                 hold_heading: float = 0.0) -> None:
        self.legs = list(legs)
        self.hold_heading = hold_heading
        self._emitted = -1

    def step(self, t: float) -> HelmDecision:
        active = -1
        for i, leg in enumerate(self.legs):
            if leg.start_time <= t:
                active = i
            else:
                break
        if active < 0:
            # before the first leg: hold-safe defaults
            return HelmDecision(self.hold_heading, 0.0, 0.0, {}, -1)
        leg = self.legs[active]
        updates: Dict[str, float] = {}
        if active > self._emitted:
            for i in range(self._emitted + 1, active + 1):
                updates.update(self.legs[i].gain_overrides)
            self._emitted = active
        return HelmDecision(leg.heading, leg.speed, leg.depth, updates, active)


# ---------------------------------------------------------------------------
# frontseat manager
# ---------------------------------------------------------------------------

class VehicleMode(enum.Enum):
    LAUNCH_WAIT = "LAUNCH_WAIT"
    ENGAGE_IMMINENT = "ENGAGE_IMMINENT"
    MISSION_ACTIVE = "MISSION_ACTIVE"
    MISSION_ENDED = "MISSION_ENDED"
    SAFE_MODE = "SAFE_MODE"


# LED blink pattern ids published with the nominal mode sequence
LED_PATTERNS = {
    VehicleMode.LAUNCH_WAIT: 1,
    VehicleMode.ENGAGE_IMMINENT: 2,
    VehicleMode.MISSION_ACTIVE: 3,
    VehicleMode.MISSION_ENDED: 4,
}


@dataclass(frozen=True)
class SafetyEnvelope:
    max_depth: float = 30.0             # m, structural limit
    max_cruise_depth: float = 10.0      # m, mission limit <= max_depth
    min_voltage: float = 40.0           # V
    max_current: float = 8.0            # A
    max_internal_pressure: float = 0.6  # leak indicator threshold
    actuator_engage_delay: float = 10.0  # s after launch
    mission_end_time: float = 600.0     # s

    def __post_init__(self) -> None:
        values = (self.max_depth, self.max_cruise_depth, self.min_voltage,
                  self.max_current, self.max_internal_pressure,
                  self.actuator_engage_delay, self.mission_end_time)
        if any(v <= 0.0 for v in values):
            raise ValueError("safety envelope entries must be positive")
        if self.max_cruise_depth > self.max_depth:
            raise ValueError("max_cruise_depth must not exceed max_depth")


@dataclass(frozen=True)
class FsmOutput:
    mode: VehicleMode
    actuators_enabled: bool
    safe_reason: Optional[str]
    events: Tuple[str, ...]   # telemetry events emitted this tick


class FrontseatManager:
    """Mission/safety state machine.

    Nominal sequence: LAUNCH_WAIT -> ENGAGE_IMMINENT (final 10 s of the
    engage delay) -> MISSION_ACTIVE -> MISSION_ENDED.  Envelope violations
    transition to SAFE_MODE, which only an explicit operator reset leaves.
    """

    IMMINENT_WINDOW = 10.0   # s before actuator engage

    def __init__(self, envelope: SafetyEnvelope,
                 safety_enabled: bool = True) -> None:
        self.envelope = envelope
        self.safety_enabled = safety_enabled
        self.mode = VehicleMode.LAUNCH_WAIT
        self.safe_reason: Optional[str] = None
        self._announced = False

    def _violation(self, health: VehicleHealth, depth: float) -> Optional[str]:
        env = self.envelope
        if depth > env.max_depth:
            return "depth"
        if depth > env.max_cruise_depth:
            return "cruise_depth"
        if health.battery_v < env.min_voltage:
            return "voltage"
        if health.motor_current > env.max_current:
            return "current"
        if health.internal_pressure > env.max_internal_pressure:
            return "pressure"
        return None

    def operator_reset(self) -> None:
        """Explicit recovery from safe mode (topside command)."""
        self.mode = VehicleMode.LAUNCH_WAIT
        self.safe_reason = None

    def step(self, t: float, health: VehicleHealth, depth: float) -> FsmOutput:
        env = self.envelope
        events: List[str] = []
        previous = self.mode

        if self.mode is not VehicleMode.SAFE_MODE:
            reason = self._violation(health, depth) if self.safety_enabled else None
            if reason is not None:
                self.mode = VehicleMode.SAFE_MODE
                self.safe_reason = reason
            else:
                if t >= env.mission_end_time:
                    self.mode = VehicleMode.MISSION_ENDED
                elif t >= env.actuator_engage_delay:
                    self.mode = VehicleMode.MISSION_ACTIVE
                elif t >= env.actuator_engage_delay - self.IMMINENT_WINDOW:
                    self.mode = VehicleMode.ENGAGE_IMMINENT
                else:
                    self.mode = VehicleMode.LAUNCH_WAIT

        if self.mode is not previous or not self._announced:
            self._announced = True
            events.append(f"MODE={self.mode.value}")
            if self.mode in LED_PATTERNS:
                events.append(f"LED_PATTERN={LED_PATTERNS[self.mode]}")
            if self.mode is VehicleMode.SAFE_MODE:
                events.append(f"SAFE_REASON={self.safe_reason}")
        return FsmOutput(
            mode=self.mode,
            actuators_enabled=self.mode is VehicleMode.MISSION_ACTIVE,
            safe_reason=self.safe_reason,
            events=tuple(events),
        )


# ---------------------------------------------------------------------------
# payload autonomy ingest
# ---------------------------------------------------------------------------

@dataclass
class PayloadCommandState:
    heading: Optional[float] = None
    speed: Optional[float] = None
    depth: Optional[float] = None
    last_rx: float = -math.inf
    rejected: int = 0


class PayloadAutonomy:
    """Ingests desired-setpoint commands from the payload gateway.

    The payload replaces the passive helm's outputs but remains bound by
    the safety envelope: commanded depth is clamped to the cruise limit
    unless safety gating is turned off.  A watchdog falls back to hold-safe
    defaults when the payload goes silent.
    """

    def __init__(self, envelope: SafetyEnvelope, timeout: float = 5.0,
                 safety_enabled: bool = True) -> None:
        self.envelope = envelope
        self.timeout = timeout
        self.safety_enabled = safety_enabled
        self.state = PayloadCommandState()

    def ingest(self, key: str, value: object, t: float) -> None:
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            self.state.rejected += 1
            return
        value = float(value)
        if key == "DESIRED_HEADING":
            self.state.heading = value % 360.0
        elif key == "DESIRED_SPEED":
            self.state.speed = max(0.0, value)
        elif key == "DESIRED_DEPTH":
            if self.safety_enabled:
                value = min(value, self.envelope.max_cruise_depth)
            self.state.depth = max(0.0, value)
        else:
            self.state.rejected += 1
            return
        self.state.last_rx = t

    def decision(self, t: float, hold_heading: float = 0.0) -> HelmDecision:
        st = self.state
        stale = t - st.last_rx > self.timeout
        if stale or st.heading is None:
            return HelmDecision(hold_heading, 0.0, 0.0, {}, -1)
        return HelmDecision(st.heading, st.speed or 0.0, st.depth or 0.0, {}, 0)
