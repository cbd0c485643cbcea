"""Navigation engine pipeline: one time-ordered measurement stream in, one
fused solution out per tick.

Tick flow: preprocess sensors, advance the flight dynamic model, convert it
to an earth-referenced aiding velocity through the calibrator, extrapolate
latent acoustic fixes along the model track, run the layered bias stages,
then predict/update the main six-state filter and let the manager decide
the published status.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..measurements import (
    DepthMeas,
    DvlMeas,
    GpsFix,
    ImuMeas,
    LblFix,
    Measurement,
    RpmMeas,
    timestamp_of,
)
from .calibrator import ModelCalibrator
from .flightmodel import FlightModel, ModelParams, Regressors
from .fusion import LayeredFusion, NavSolution
from .manager import NavManager, NavStatus
from .preprocessors import DepthFilter, DvlPreprocessor, LblExtrapolator


@dataclass
class NavConfig:
    sigma_fix: float = 1.0        # m, GPS/LBL position update
    sigma_depth: float = 0.05     # m
    sigma_dvl: float = 0.05       # m/s
    model_sigma0: float = 0.2     # m/s before the calibrator refines it
    gate_k: float = 5.0
    bias_tau: float = 300.0
    calib_tau: float = 30.0
    calib_sigma_tau: float = 60.0
    reinit_mult: float = 10.0
    reinit_floor: float = 5.0
    depth_max_rate: float = 5.0
    depth_window: int = 20
    dvl_mount_yaw: float = 0.0
    lbl_track_horizon: float = 600.0
    rls_online: bool = False
    use_dvl_reference: bool = True
    start_x: float = 0.0
    start_y: float = 0.0
    active_terms: Dict[str, list] = field(default_factory=dict)


class NavEngine:
    def __init__(self, params: ModelParams, cfg: Optional[NavConfig] = None) -> None:
        self.cfg = cfg or NavConfig()
        c = self.cfg
        self.model = FlightModel(params, active=c.active_terms or None)
        self.calibrator = ModelCalibrator(tau=c.calib_tau,
                                          sigma_tau=c.calib_sigma_tau)
        self.calibrator.state.model_sigma = c.model_sigma0
        self.fusion = LayeredFusion(x0=c.start_x, y0=c.start_y,
                                    gate_k=c.gate_k, bias_tau=c.bias_tau)
        self.manager = NavManager(reinit_mult=c.reinit_mult,
                                  reinit_floor=c.reinit_floor)
        self.depth_filter = DepthFilter(max_rate=c.depth_max_rate,
                                        window=c.depth_window)
        self.dvl_pre = DvlPreprocessor(mount_yaw=c.dvl_mount_yaw)
        self.lbl = LblExtrapolator(horizon=c.lbl_track_horizon)
        # model dead-reckoning track (adapted velocity integral)
        self.model_x = c.start_x
        self.model_y = c.start_y
        self.attitude = (0.0, 0.0, 0.0)
        self.rates = (0.0, 0.0, 0.0)
        self.rpm = 0.0
        self.out_of_order = 0
        self._last_t: Dict[str, float] = {}
        self._last_raw_lbl: Optional[LblFix] = None
        self._fix_vel_cache: Optional[Tuple[float, float]] = None
        self._last_dvl_earth: Optional[Tuple[float, float]] = None
        self._last_dvl_t = -math.inf
        self._last_fix_vel: Optional[Tuple[float, float, float]] = None
        self._last_step_t: Optional[float] = None
        self._initialized = False
        self.events: List[str] = []

    # -- measurement intake ---------------------------------------------------

    def _accept(self, m: Measurement) -> bool:
        key = type(m).__name__
        t = timestamp_of(m)
        if t < self._last_t.get(key, -math.inf):
            self.out_of_order += 1
            return False
        self._last_t[key] = t
        return True

    # -- one tick ---------------------------------------------------------------

    def step(self, t: float, measurements: Iterable[Measurement],
             dt: float) -> NavSolution:
        cfg = self.cfg
        self.events = []
        # the solution is produced at the measurement time: the first call
        # only applies updates, later calls integrate over the elapsed span
        if self._last_step_t is None:
            dt = 0.0
        else:
            dt = t - self._last_step_t
        self._last_step_t = t
        depth_val: Optional[float] = None
        fixes: List[Tuple[float, float, str]] = []
        dvl_meas: Optional[DvlMeas] = None

        for m in sorted(measurements, key=lambda mm: (timestamp_of(mm),
                                                      type(mm).__name__)):
            if not self._accept(m):
                continue
            self.manager.note_measurement(timestamp_of(m))
            if isinstance(m, ImuMeas):
                self.attitude = (m.phi, m.theta, m.psi)
                self.rates = (m.p, m.q, m.r)
            elif isinstance(m, RpmMeas):
                self.rpm = m.rpm
            elif isinstance(m, DepthMeas):
                depth_val = self.depth_filter.update(m)
            elif isinstance(m, GpsFix):
                fixes.append((m.x, m.y, "gps"))
            elif isinstance(m, LblFix):
                extrapolated = self.lbl.extrapolate(
                    m, t, (self.model_x, self.model_y))
                if extrapolated is not None:
                    fixes.append((extrapolated[0], extrapolated[1], "lbl"))
                    self._note_fix_velocity(m)
            elif isinstance(m, DvlMeas):
                dvl_meas = m

        phi, theta, psi = self.attitude
        p, q, r = self.rates
        z_for_model = depth_val if depth_val is not None else self.fusion.state[2]

        # flight dynamic model advance and water->earth conversion
        prev = Regressors(rpm=self.rpm, p=p, q=q, r=r, z=z_for_model,
                          u_prev=self.model.u, v_prev=self.model.v,
                          w_prev=self.model.w)
        u_m, v_m, w_m = self.model.predict(self.rpm, p, q, r, z_for_model)
        vn_m, ve_m = self.calibrator.adapted_velocity((u_m, v_m), psi)
        vd_m = -u_m * math.sin(theta)
        self.model_x += vn_m * dt
        self.model_y += ve_m * dt
        self.lbl.record(t, self.model_x, self.model_y)

        # DVL preprocess and earth conversion
        dvl_earth: Optional[Tuple[float, float]] = None
        if dvl_meas is not None:
            res = self.dvl_pre.process(dvl_meas, yaw_rate=r)
            if res.mismatch_flag:
                self.manager.note_mismatch(t)
                self.events.append("DVL_MISMATCH")
            vn = res.vx * math.cos(psi) - res.vy * math.sin(psi)
            ve = res.vx * math.sin(psi) + res.vy * math.cos(psi)
            dvl_earth = (vn, ve)
            self._last_dvl_earth = dvl_earth
            self._last_dvl_t = t
            if cfg.rls_online:
                self.model.identify(prev, (res.vx, res.vy, res.vz))

        # calibrator references: differenced acoustic fixes, then DVL
        if self._last_fix_vel is not None:
            ref_n, ref_e, span = self._last_fix_vel
            self.calibrator.calibrate((u_m, v_m), psi, (ref_n, ref_e), t,
                                      dt_effective=span)
            self._last_fix_vel = None
        elif dvl_earth is not None and cfg.use_dvl_reference:
            corrected = self.fusion.corrected_dvl(dvl_earth)
            self.calibrator.calibrate((u_m, v_m), psi, corrected, t,
                                      dt_effective=dt)

        # layered bias stages (hierarchy: fixes -> DVL -> model)
        self.fusion.propagate_biases(dt)
        fix_velocity = self._fix_velocity_estimate()
        if dvl_earth is not None and fix_velocity is not None:
            self.fusion.update_dvl_bias(dvl_earth, fix_velocity,
                                        cfg.sigma_fix ** 2)
        if dvl_earth is not None:
            corrected = self.fusion.corrected_dvl(dvl_earth)
            self.fusion.update_model_bias((vn_m, ve_m), corrected,
                                          cfg.sigma_dvl ** 2)

        # best bias-corrected velocity propagates the main filter
        dvl_fresh = t - self._last_dvl_t <= 1.0
        if dvl_fresh and self._last_dvl_earth is not None:
            vel = self.fusion.corrected_dvl(self._last_dvl_earth)
            vel3 = (vel[0], vel[1], vd_m)
            vel_var = cfg.sigma_dvl ** 2
        else:
            vel = self.fusion.corrected_model((vn_m, ve_m))
            vel3 = (vel[0], vel[1], vd_m)
            vel_var = self.calibrator.state.model_sigma ** 2
        self.fusion.predict(vel3, vel_var, dt)

        if depth_val is not None:
            self.fusion.update_depth(depth_val, cfg.sigma_depth)

        reinitialized = False
        for fx, fy, source in fixes:
            if not self._initialized:
                self.fusion.reinitialize(fx, fy, pos_var=cfg.sigma_fix ** 2)
                self.model_x, self.model_y = fx, fy
                self._initialized = True
                continue
            if self.manager.check_fix((fx, fy),
                                      (self.fusion.state[0],
                                       self.fusion.state[1]),
                                      self.fusion.position_sigma()):
                self.fusion.reinitialize(fx, fy)
                reinitialized = True
                self.events.append(f"NAV_REINIT_{source.upper()}")
            else:
                self.fusion.update_position(fx, fy, cfg.sigma_fix)

        status = self.manager.status(t, reinitialized=reinitialized)
        st = self.fusion.state
        cal = self.calibrator.state
        return NavSolution(
            t=t, x=float(st[0]), y=float(st[1]), z=float(st[2]),
            vn=float(st[3]), ve=float(st[4]), vd=float(st[5]),
            phi=phi, theta=theta, psi=psi,
            cov=self.fusion.cov.copy(),
            bias={
                "dvl_n": float(self.fusion.bias_dvl.value[0]),
                "dvl_e": float(self.fusion.bias_dvl.value[1]),
                "model_n": float(self.fusion.bias_model.value[0]),
                "model_e": float(self.fusion.bias_model.value[1]),
            },
            current_n=cal.current_n, current_e=cal.current_e,
            model_sigma=cal.model_sigma, status=status.value,
        )

    # -- helpers ----------------------------------------------------------------

    def _note_fix_velocity(self, fix: LblFix) -> None:
        """Differenced raw fixes give an earth velocity averaged over the
        fix spacing, used as a calibrator reference and for the DVL bias
        stage."""
        last = self._last_raw_lbl
        self._last_raw_lbl = fix
        if last is None:
            return
        span = fix.t_n - last.t_n
        if span <= 0.0:
            return
        vel = ((fix.x - last.x) / span, (fix.y - last.y) / span)
        self._last_fix_vel = (vel[0], vel[1], span)
        self._fix_vel_cache = vel

    def _fix_velocity_estimate(self) -> Optional[Tuple[float, float]]:
        return self._fix_vel_cache
