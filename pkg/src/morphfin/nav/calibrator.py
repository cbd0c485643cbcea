"""Self-calibration of the flight dynamic model to the local environment.

The model's velocity lives in the water frame.  Whenever a trusted
earth-referenced velocity is available (differenced acoustic fixes, or a
bottom-locked DVL), the calibrator smooths the residual

    residual = v_reference - (R(psi) v_model + v_current_estimate)

into a water-current estimate, turning the model velocity into an
earth-referenced, drift-compensated aiding source:

    v_adapted = R(psi) v_model + v_current_estimate

A running magnitude of the post-correction residual doubles as the model's
own uncertainty, which the fusion stage uses as the model measurement
noise.  When the reference goes silent past the timeout the estimates
freeze at their last values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple


@dataclass
class CalibratorState:
    current_n: float = 0.0
    current_e: float = 0.0
    model_sigma: float = 0.2     # m/s, starting model uncertainty
    last_reference_t: float = -math.inf
    updates: int = 0


class ModelCalibrator:
    def __init__(self, tau: float = 30.0, sigma_tau: float = 60.0,
                 reference_timeout: float = 60.0,
                 sigma_floor: float = 0.02) -> None:
        self.tau = tau
        self.sigma_tau = sigma_tau
        self.reference_timeout = reference_timeout
        self.sigma_floor = sigma_floor
        self.state = CalibratorState()

    @staticmethod
    def rotate_to_earth(u: float, v: float, psi: float) -> Tuple[float, float]:
        return (u * math.cos(psi) - v * math.sin(psi),
                u * math.sin(psi) + v * math.cos(psi))

    def adapted_velocity(self, model_uv: Tuple[float, float],
                         psi: float) -> Tuple[float, float]:
        """Model velocity converted from water to earth reference."""
        vn, ve = self.rotate_to_earth(model_uv[0], model_uv[1], psi)
        return vn + self.state.current_n, ve + self.state.current_e

    def calibrate(self, model_uv: Tuple[float, float], psi: float,
                  reference_earth: Tuple[float, float], t: float,
                  dt_effective: Optional[float] = None) -> Tuple[float, float]:
        """Blend one reference sample into the current/uncertainty estimates.

        ``dt_effective`` is the time the sample represents (e.g. the fix
        spacing for differenced acoustic updates); it sets the smoothing
        weight dt/tau.
        """
        st = self.state
        span = dt_effective if dt_effective is not None else 1.0
        vn, ve = self.adapted_velocity(model_uv, psi)
        res_n = reference_earth[0] - vn
        res_e = reference_earth[1] - ve
        weight = min(1.0, span / self.tau)
        st.current_n += weight * res_n
        st.current_e += weight * res_e
        sigma_w = min(1.0, span / self.sigma_tau)
        magnitude = math.hypot(res_n, res_e)
        st.model_sigma = max(self.sigma_floor,
                             (1.0 - sigma_w) * st.model_sigma + sigma_w * magnitude)
        st.last_reference_t = t
        st.updates += 1
        return st.current_n, st.current_e

    def is_frozen(self, t: float) -> bool:
        """True when no reference arrived within the timeout; estimates hold."""
        return t - self.state.last_reference_t > self.reference_timeout
