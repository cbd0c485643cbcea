"""Layered fusion: slowly-varying per-source velocity bias states feeding a
six-state position/velocity Kalman filter.

Bias errors are corrected top-down in the accuracy hierarchy: position
fixes calibrate the DVL bias, the bias-corrected DVL calibrates the model
bias.  The main filter then propagates with the best bias-corrected
velocity and takes depth and position-fix updates.  Covariances are
re-symmetrized after every step and inflated back to a floor if an update
drives them degenerate; fix innovations beyond the gate are rejected and
counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class NavSolution:
    """Fused navigation output for one tick."""

    t: float
    x: float
    y: float
    z: float
    vn: float
    ve: float
    vd: float
    phi: float
    theta: float
    psi: float
    cov: np.ndarray                  # 6x6 position+velocity covariance
    bias: Dict[str, float] = field(default_factory=dict)
    current_n: float = 0.0
    current_e: float = 0.0
    model_sigma: float = 0.2
    status: str = "OK"

    @property
    def speed(self) -> float:
        return math.hypot(self.vn, self.ve)

    def position_sigma(self) -> float:
        return math.sqrt(max(self.cov[0, 0] + self.cov[1, 1], 0.0))


class BiasState:
    """First-order Gauss-Markov bias estimate for one velocity source."""

    def __init__(self, tau: float = 300.0, q: float = 1.0e-5,
                 var0: float = 0.04) -> None:
        self.tau = tau
        self.q = q
        self.value = np.zeros(2)
        self.var = np.full(2, var0)
        self.var0 = var0
        self.updates = 0

    def propagate(self, dt: float) -> None:
        decay = math.exp(-dt / self.tau)
        self.value *= decay
        self.var = self.var * decay * decay + self.q * dt

    def update(self, observed: np.ndarray, obs_var: float) -> None:
        gain = self.var / (self.var + obs_var)
        self.value = self.value + gain * (observed - self.value)
        self.var = (1.0 - gain) * self.var
        self.updates += 1


class LayeredFusion:
    def __init__(self, x0: float = 0.0, y0: float = 0.0, z0: float = 0.0,
                 pos_var0: float = 4.0, gate_k: float = 5.0,
                 q_pos: float = 1.0e-6, bias_tau: float = 300.0) -> None:
        self.state = np.array([x0, y0, z0, 0.0, 0.0, 0.0])
        self.cov = np.diag([pos_var0, pos_var0, 1.0, 0.25, 0.25, 0.25])
        self.gate_k = gate_k
        self.q_pos = q_pos
        self.bias_dvl = BiasState(tau=bias_tau)
        self.bias_model = BiasState(tau=bias_tau)
        self.rejected_fixes = 0

    # -- bias layer ----------------------------------------------------------

    def propagate_biases(self, dt: float) -> None:
        self.bias_dvl.propagate(dt)
        self.bias_model.propagate(dt)

    def update_dvl_bias(self, dvl_earth: Tuple[float, float],
                        fix_velocity: Tuple[float, float],
                        fix_var: float) -> None:
        observed = np.array([dvl_earth[0] - fix_velocity[0],
                             dvl_earth[1] - fix_velocity[1]])
        self.bias_dvl.update(observed, fix_var)

    def corrected_dvl(self, dvl_earth: Tuple[float, float]) -> Tuple[float, float]:
        return (dvl_earth[0] - self.bias_dvl.value[0],
                dvl_earth[1] - self.bias_dvl.value[1])

    def update_model_bias(self, model_earth: Tuple[float, float],
                          dvl_corrected: Tuple[float, float],
                          dvl_var: float) -> None:
        observed = np.array([model_earth[0] - dvl_corrected[0],
                             model_earth[1] - dvl_corrected[1]])
        self.bias_model.update(observed, dvl_var)

    def corrected_model(self, model_earth: Tuple[float, float]) -> Tuple[float, float]:
        return (model_earth[0] - self.bias_model.value[0],
                model_earth[1] - self.bias_model.value[1])

    # -- main filter ----------------------------------------------------------

    def predict(self, velocity: Tuple[float, float, float], vel_var: float,
                dt: float) -> None:
        """Propagate position with the supplied bias-corrected velocity."""
        vn, ve, vd = velocity
        self.state[0] += vn * dt
        self.state[1] += ve * dt
        self.state[2] += vd * dt
        self.state[3:] = (vn, ve, vd)
        factor = np.eye(6)
        factor[0, 3] = factor[1, 4] = factor[2, 5] = dt
        self.cov = factor @ self.cov @ factor.T
        self.cov[0, 0] += self.q_pos * dt + vel_var * dt * dt
        self.cov[1, 1] += self.q_pos * dt + vel_var * dt * dt
        self.cov[2, 2] += self.q_pos * dt + vel_var * dt * dt
        self.cov[3, 3] = self.cov[4, 4] = self.cov[5, 5] = vel_var
        self._condition()

    def _scalar_update(self, index: int, measured: float, var: float,
                       gate: bool = True) -> bool:
        innovation = measured - self.state[index]
        s = self.cov[index, index] + var
        if gate and abs(innovation) > self.gate_k * math.sqrt(s):
            return False
        gain = self.cov[:, index] / s
        self.state = self.state + gain * innovation
        self.cov = self.cov - np.outer(gain, self.cov[index, :])
        self._condition()
        return True

    def update_depth(self, z: float, sigma: float) -> bool:
        return self._scalar_update(2, z, sigma * sigma)

    def update_position(self, x: float, y: float, sigma: float) -> bool:
        ok_x = self._scalar_update(0, x, sigma * sigma)
        ok_y = self._scalar_update(1, y, sigma * sigma)
        if not (ok_x and ok_y):
            self.rejected_fixes += 1
        return ok_x and ok_y

    def reinitialize(self, x: float, y: float, pos_var: float = 25.0) -> None:
        self.state[0] = x
        self.state[1] = y
        self.cov[0, :] = 0.0
        self.cov[:, 0] = 0.0
        self.cov[1, :] = 0.0
        self.cov[:, 1] = 0.0
        self.cov[0, 0] = self.cov[1, 1] = pos_var
        self._condition()

    def _condition(self) -> None:
        self.cov = 0.5 * (self.cov + self.cov.T)
        diag = np.diag(self.cov)
        if np.any(diag < 0.0) or not np.all(np.isfinite(self.cov)):
            # degenerate update: re-floor the diagonal, keep it PSD
            vals, vecs = np.linalg.eigh(self.cov)
            vals = np.clip(vals, 1.0e-12, None)
            self.cov = vecs @ np.diag(vals) @ vecs.T

    def position_sigma(self) -> float:
        return math.sqrt(max(self.cov[0, 0] + self.cov[1, 1], 0.0))

    def assert_psd(self) -> None:
        vals = np.linalg.eigvalsh(0.5 * (self.cov + self.cov.T))
        if vals.min() < -1.0e-9:
            raise AssertionError(f"covariance lost PSD: min eig {vals.min()}")
