"""Time-stepping truth model of the vehicle, actuators, environment and
sensors -- the plant side of the software-in-the-loop closure.

The sway/yaw pair integrates the linearized maneuvering equations

    (m - Yvdot) vdot + (m xg - Yrdot) rdot = Yf + Yv v - (m u - Yr) r
    (m xg - Nvdot) vdot + (Izz - Nrdot) rdot = Nf + Nv v - (m xg u - Nr) r

with the derivatives composed from the bare hull plus rudder plus the
currently deployed fin fraction, and control forcing linear in the surface
deflections.  The remaining channels use deliberately simple decoupled
models sufficient to exercise the control stack:

    surge:  m udot = k_thrust T% - k_drag u (1 + k_turn_drag r^2)
    pitch:  iyy qdot = k_elev u^2 de - k_q_damp q - k_pitch_rest theta
    roll:   ixx pdot = k_roll_rest phi_bias u^2/uref^2 - k_roll_surf u^2 dd
                       - k_p_damp p - k_roll_rest phi
    depth:  zdot = -u sin(theta)

Body rates map to Euler angle rates through the exact kinematic relations,
which is what couples rudder action into pitch (and hence depth) whenever
the vehicle is rolled.  A propeller-swirl yaw moment proportional to the
static roll bias gives starboard turns a slight edge over port turns.
Everything is deterministic given (seed, config, command stream).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .angles import wrap_pi
from .hydro import Appendage, HydroConfig, with_fin, with_rudder
from .measurements import (
    DepthMeas,
    DvlMeas,
    GpsFix,
    ImuMeas,
    LblFix,
    Measurement,
    RpmMeas,
)

STERN_LIMIT = math.radians(15.0)   # max articulation of each stern surface
FIN_ANGLE_LIMIT = math.radians(20.0)  # max morphing-fin articulation


class PlantConfigError(ValueError):
    """Raised for physically inconsistent plant configuration."""


class PlantAbort(RuntimeError):
    """Raised when integration produces a non-finite state."""


@dataclass(frozen=True)
class BodyState:
    """Kinematic/dynamic state: body velocities, Euler angles, local position.

    x is north, y is east, z is depth (positive down); psi is heading from
    north.  ``U`` aliases the forward speed u.
    """

    u: float = 0.0
    v: float = 0.0
    w: float = 0.0
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @property
    def U(self) -> float:
        return self.u

    def validate(self) -> None:
        values = (self.u, self.v, self.w, self.p, self.q, self.r,
                  self.phi, self.theta, self.psi, self.x, self.y, self.z)
        if not all(math.isfinite(val) for val in values):
            raise PlantAbort(f"non-finite body state: {self}")
        if self.z < 0.0:
            raise PlantAbort(f"negative depth: {self.z}")


@dataclass(frozen=True)
class ActuatorSet:
    """Angles of the four stern surfaces plus fin deployment and thrust."""

    uppr_rudd: float = 0.0   # rad
    lowr_rudd: float = 0.0   # rad
    port_elev: float = 0.0   # rad
    stbd_elev: float = 0.0   # rad
    fin_deploy: float = 0.0  # 0 retracted .. 1 deployed
    fin_angle: float = 0.0   # rad, active only at full deployment
    thrust_pct: float = 0.0  # 0..100
    rpm: float = 0.0

    def clamped(self) -> "ActuatorSet":
        clamp = lambda val, lim: max(-lim, min(lim, val))
        return replace(
            self,
            uppr_rudd=clamp(self.uppr_rudd, STERN_LIMIT),
            lowr_rudd=clamp(self.lowr_rudd, STERN_LIMIT),
            port_elev=clamp(self.port_elev, STERN_LIMIT),
            stbd_elev=clamp(self.stbd_elev, STERN_LIMIT),
            fin_deploy=max(0.0, min(1.0, self.fin_deploy)),
            fin_angle=clamp(self.fin_angle, FIN_ANGLE_LIMIT),
            thrust_pct=max(0.0, min(100.0, self.thrust_pct)),
        )

    @property
    def rudder_mean(self) -> float:
        return 0.5 * (self.uppr_rudd + self.lowr_rudd)

    @property
    def elevator_mean(self) -> float:
        return 0.5 * (self.port_elev + self.stbd_elev)

    @property
    def roll_differential(self) -> float:
        """Mean differential deflection that produces a rolling moment."""
        return 0.25 * ((self.uppr_rudd - self.lowr_rudd)
                       + (self.stbd_elev - self.port_elev))


@dataclass
class SensorNoise:
    depth: float = 0.0       # m
    imu_att: float = 0.0     # rad
    imu_rate: float = 0.0    # rad/s
    gps: float = 0.0         # m
    lbl: float = 0.0         # m
    dvl: float = 0.0         # m/s


@dataclass
class Environment:
    """Scenario environment: currents, density, disturbances, sensor timing."""

    current_n: float = 0.0
    current_e: float = 0.0
    water_density: float = 1000.0
    prop_torque_roll: float = 0.0       # static roll bias (rad) from the prop
    lbl_latency: float = 20.0           # s between fix validity and arrival
    lbl_interval: float = 0.0           # s between fixes; 0 disables LBL
    dvl_enabled: bool = False
    dvl_mount_yaw: float = 0.0          # rad, sensor mount rotation about z
    gps_surface_threshold: float = 0.5  # m; GPS only above this depth
    noise: SensorNoise = field(default_factory=SensorNoise)
    leak_rate: float = 0.0              # internal pressure ramp (units/s)


@dataclass
class VehicleHealth:
    battery_v: float = 44.4
    motor_current: float = 0.0
    internal_pressure: float = 0.25     # fraction of ambient after pump-down


@dataclass
class PlantParams:
    """Plant constants outside the hydrodynamic derivative set."""

    k_thrust: float = 0.08       # N per thrust percent
    k_drag: float = 4.0          # N s/m
    k_turn_drag: float = 1.15    # peak extra drag fraction in a hard turn
    r_sat: float = 0.31          # rad/s knee of the turn-drag onset
    rpm_per_pct: float = 40.0
    u_ref: float = 1.5           # speed where appendage lifts are quoted
    # pitch channel
    iyy_eff: float = 1.2         # kg m^2 including added inertia
    k_elev: float = 6.0          # N m per rad per (m/s)^2
    k_q_damp: float = 6.0        # N m s
    k_pitch_rest: float = 4.8    # N m per rad
    # roll channel
    ixx_eff: float = 0.08        # kg m^2
    k_roll_rest: float = 0.8     # N m per rad
    k_p_damp: float = 0.5        # N m s
    k_roll_surf: float = 0.35    # N m per rad per (m/s)^2
    fixed_fin_counter: float = math.radians(15.0)  # roll bias cancelled by fixed fins
    k_yaw_swirl: float = 0.35    # N m yaw bias per rad of net roll bias at u_ref
    # actuator dynamics
    surface_slew: float = math.radians(60.0)  # rad/s
    fin_deploy_time: float = 1.0              # s for full deploy/retract
    fin_angle_slew: float = math.radians(120.0)
    # health
    current_per_pct: float = 0.04   # A per thrust percent
    battery_drain: float = 2.0e-4   # V per A per s


class Plant:
    """Owns the truth state and advances it with fixed-step RK4."""

    def __init__(
        self,
        cfg: HydroConfig,
        rudder: Appendage,
        fin: Optional[Appendage],
        params: PlantParams,
        env: Environment,
        seed: int = 0,
        state: Optional[BodyState] = None,
    ) -> None:
        self.cfg = cfg
        self.rudder = rudder
        self.fin = fin
        self.params = params
        self.env = env
        self.state = state or BodyState()
        self.rng = np.random.default_rng(seed)
        mass = np.array([
            [cfg.m - cfg.yv_dot, cfg.m * cfg.xg - cfg.yr_dot],
            [cfg.m * cfg.xg - cfg.nv_dot, cfg.izz - cfg.nr_dot],
        ])
        det = mass[0, 0] * mass[1, 1] - mass[0, 1] * mass[1, 0]
        if det <= 0.0:
            raise PlantConfigError(f"singular sway/yaw mass matrix (det={det:.4g})")
        self._mass_inv = np.linalg.inv(mass)
        self._track: List[tuple] = []      # (t, x, y) history for latent fixes
        self._last_lbl_emit = -math.inf

    # -- dynamics -----------------------------------------------------------

    def _net_roll_bias(self) -> float:
        if self.env.prop_torque_roll == 0.0:
            return 0.0
        return self.env.prop_torque_roll - self.params.fixed_fin_counter

    def _derivatives(self, s: np.ndarray, act: ActuatorSet) -> np.ndarray:
        cfg, par = self.cfg, self.params
        u, v, r, q, p, phi, theta, psi = s[0:8]
        u_dyn = max(u, 0.05)   # keep the per-speed lift composition defined
        speed_sq = (u_dyn / par.u_ref) ** 2

        # appendage lifts scale with u^2; compose the derivatives at the
        # current speed so the passive terms stay consistent with the forcing
        rudder_at_u = replace(self.rudder,
                              lift_per_angle=self.rudder.lift_at(u_dyn),
                              u_ref=u_dyn)
        composed = with_rudder(cfg, rudder_at_u, u_dyn)
        if self.fin is not None and act.fin_deploy > 0.0:
            fin_at_u = replace(self.fin,
                               lift_per_angle=self.fin.lift_at(u_dyn),
                               u_ref=u_dyn)
            composed = with_fin(composed, fin_at_u, act.fin_deploy, u_dyn)

        lift_r = self.rudder.lift_at(u_dyn)
        y_force = lift_r * act.rudder_mean
        n_force = self.rudder.station * y_force
        if self.fin is not None and act.fin_deploy > 0.0:
            lift_f = act.fin_deploy * self.fin.lift_at(u_dyn)
            y_fin = lift_f * act.fin_angle
            y_force += y_fin
            n_force += self.fin.station * y_fin
        if act.thrust_pct > 0.0 and self.env.prop_torque_roll != 0.0:
            n_force += par.k_yaw_swirl * self._net_roll_bias() * speed_sq

        rhs = np.array([
            y_force + composed.yv * v - (cfg.m * u - composed.yr) * r,
            n_force + composed.nv * v - (cfg.m * cfg.xg * u - composed.nr) * r,
        ])
        v_dot, r_dot = self._mass_inv @ rhs

        # saturating quartic turn drag: negligible in the small-angle linear
        # regime, near-constant extra drag once the vehicle is really turning
        r4 = r ** 4
        turn_drag = par.k_turn_drag * r4 / (par.r_sat ** 4 + r4)
        u_dot = (par.k_thrust * act.thrust_pct
                 - par.k_drag * u * (1.0 + turn_drag)) / cfg.m

        q_dot = (par.k_elev * u_dyn * u_dyn * act.elevator_mean
                 - par.k_q_damp * q - par.k_pitch_rest * theta) / par.iyy_eff

        roll_moment = 0.0
        if act.thrust_pct > 0.0 and self.env.prop_torque_roll != 0.0:
            roll_moment += par.k_roll_rest * self._net_roll_bias() * speed_sq
        roll_moment -= par.k_roll_surf * u_dyn * u_dyn * act.roll_differential
        p_dot = (roll_moment - par.k_p_damp * p - par.k_roll_rest * phi) / par.ixx_eff

        cos_theta = max(math.cos(theta), 0.1)
        phi_dot = p + math.tan(theta) * (q * math.sin(phi) + r * math.cos(phi))
        theta_dot = q * math.cos(phi) - r * math.sin(phi)
        psi_dot = (q * math.sin(phi) + r * math.cos(phi)) / cos_theta

        # earth-frame translation (ZYX rotation of body velocity, w = 0)
        cpsi, spsi = math.cos(psi), math.sin(psi)
        cth, sth = math.cos(theta), math.sin(theta)
        cphi, sphi = math.cos(phi), math.sin(phi)
        x_dot = u * cpsi * cth + v * (cpsi * sth * sphi - spsi * cphi) \
            + self.env.current_n
        y_dot = u * spsi * cth + v * (spsi * sth * sphi + cpsi * cphi) \
            + self.env.current_e
        z_dot = -u * sth

        return np.array([u_dot, v_dot, r_dot, q_dot, p_dot,
                         phi_dot, theta_dot, psi_dot, x_dot, y_dot, z_dot])

    def step(self, act: ActuatorSet, dt: float) -> BodyState:
        """Advance the truth state by dt (s) under the given actuator set."""
        if not 0.0 < dt <= 0.1:
            raise ValueError(f"dt must be in (0, 0.1] s, got {dt}")
        act = act.clamped()
        st = self.state
        s = np.array([st.u, st.v, st.r, st.q, st.p,
                      st.phi, st.theta, st.psi, st.x, st.y, st.z])
        k1 = self._derivatives(s, act)
        k2 = self._derivatives(s + 0.5 * dt * k1, act)
        k3 = self._derivatives(s + 0.5 * dt * k2, act)
        k4 = self._derivatives(s + dt * k3, act)
        s = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(s)):
            raise PlantAbort("integration produced a non-finite state")
        self.state = BodyState(
            u=float(s[0]), v=float(s[1]), w=0.0,
            p=float(s[4]), q=float(s[3]), r=float(s[2]),
            phi=wrap_pi(float(s[5])), theta=float(s[6]),
            psi=wrap_pi(float(s[7])),
            x=float(s[8]), y=float(s[9]), z=max(0.0, float(s[10])),
        )
        return self.state

    # -- actuators ----------------------------------------------------------

    def actuator_dynamics(self, cmd: ActuatorSet, actual: ActuatorSet,
                          dt: float) -> ActuatorSet:
        """Slew each surface toward its command at the configured rates.

        Fin articulation is mechanically gated on full deployment: below
        fin_deploy = 1 the blades cannot clear the hull and the angle is
        held at zero.
        """
        cmd = cmd.clamped()
        par = self.params

        def slew(target: float, current: float, rate: float) -> float:
            step = rate * dt
            return current + max(-step, min(step, target - current))

        deploy = slew(cmd.fin_deploy, actual.fin_deploy,
                      1.0 / par.fin_deploy_time)
        if deploy >= 1.0:
            angle = slew(cmd.fin_angle, actual.fin_angle, par.fin_angle_slew)
        else:
            angle = 0.0
        return ActuatorSet(
            uppr_rudd=slew(cmd.uppr_rudd, actual.uppr_rudd, par.surface_slew),
            lowr_rudd=slew(cmd.lowr_rudd, actual.lowr_rudd, par.surface_slew),
            port_elev=slew(cmd.port_elev, actual.port_elev, par.surface_slew),
            stbd_elev=slew(cmd.stbd_elev, actual.stbd_elev, par.surface_slew),
            fin_deploy=deploy,
            fin_angle=angle,
            thrust_pct=cmd.thrust_pct,
            rpm=cmd.thrust_pct * par.rpm_per_pct,
        )

    # -- sensors ------------------------------------------------------------

    def sense(self, t: float, act: ActuatorSet) -> List[Measurement]:
        """Emit this tick's sensor measurements (truth plus seeded noise)."""
        st, env = self.state, self.env
        noise = env.noise
        self._track.append((t, st.x, st.y))
        horizon = t - self.env.lbl_latency - 60.0
        while len(self._track) > 2 and self._track[1][0] < horizon:
            self._track.pop(0)
        out: List[Measurement] = [
            DepthMeas(z=st.z + self._draw(noise.depth), t=t),
            ImuMeas(
                phi=st.phi + self._draw(noise.imu_att),
                theta=st.theta + self._draw(noise.imu_att),
                psi=wrap_pi(st.psi + self._draw(noise.imu_att)),
                p=st.p + self._draw(noise.imu_rate),
                q=st.q + self._draw(noise.imu_rate),
                r=st.r + self._draw(noise.imu_rate),
                t=t,
            ),
            RpmMeas(rpm=act.rpm, t=t),
        ]
        if st.z < env.gps_surface_threshold:
            out.append(GpsFix(x=st.x + self._draw(noise.gps),
                              y=st.y + self._draw(noise.gps), t=t))
        if env.lbl_interval > 0.0 and t - self._last_lbl_emit >= env.lbl_interval:
            latent = self._position_at(t - env.lbl_latency)
            if latent is not None:
                self._last_lbl_emit = t
                out.append(LblFix(x=latent[0] + self._draw(noise.lbl),
                                  y=latent[1] + self._draw(noise.lbl),
                                  t_n=t - env.lbl_latency, t_rx=t))
        if env.dvl_enabled:
            out.append(self._dvl_sample(t))
        return out

    def _draw(self, sigma: float) -> float:
        return self.rng.normal(0.0, sigma) if sigma > 0.0 else 0.0

    def _position_at(self, t: float) -> Optional[tuple]:
        if not self._track or t < self._track[0][0]:
            return None
        prev = self._track[0]
        for entry in self._track:
            if entry[0] >= t:
                t0, x0, y0 = prev
                t1, x1, y1 = entry
                if t1 == t0:
                    return (x1, y1)
                frac = (t - t0) / (t1 - t0)
                return (x0 + frac * (x1 - x0), y0 + frac * (y1 - y0))
            prev = entry
        return (self._track[-1][1], self._track[-1][2])

    def _dvl_sample(self, t: float) -> DvlMeas:
        st, env = self.state, self.env
        # bottom-lock velocity: body-frame ground velocity incl. current
        cpsi, spsi = math.cos(st.psi), math.sin(st.psi)
        cur_bx = env.current_n * cpsi + env.current_e * spsi
        cur_by = -env.current_n * spsi + env.current_e * cpsi
        bx, by, bz = st.u + cur_bx, st.v + cur_by, st.w
        # express in the sensor mount frame (yaw-rotated from body)
        cm, sm = math.cos(env.dvl_mount_yaw), math.sin(env.dvl_mount_yaw)
        return DvlMeas(
            vx=cm * bx + sm * by + self._draw(env.noise.dvl),
            vy=-sm * bx + cm * by + self._draw(env.noise.dvl),
            vz=bz + self._draw(env.noise.dvl),
            t=t,
            frame="mount",
        )

    # -- health -------------------------------------------------------------

    def health_step(self, health: VehicleHealth, act: ActuatorSet,
                    dt: float) -> VehicleHealth:
        current = self.params.current_per_pct * act.thrust_pct
        return VehicleHealth(
            battery_v=health.battery_v
            - self.params.battery_drain * current * dt,
            motor_current=current,
            internal_pressure=health.internal_pressure
            + self.env.leak_rate * dt,
        )
