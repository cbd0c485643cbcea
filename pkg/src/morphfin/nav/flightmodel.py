"""Flight dynamic model: regression from propeller speed, body angular rates
and depth to body-frame velocities, with recursive least squares
identification of the regressor weights.

The three channels are

    u = a1 RPM + a2 RPM^2 + a3 q p^2 + a4 r v'^2 + a5 q w'^2
        + a6 p^2 + a7 q^2 + a8 r^2 + a9 p r^2 + a10 z
    v = b1 q p^2 + b2 p^2 + b3 r u'^2 + b4 q u'^2 + b5 q^2 + b6 r^2
        + b7 p r^2 + b8 z
    w = c1 r u'^2 + c2 q u'^2 + c3 q p^2 + c4 p^2 + c5 q^2 + c6 r^2
        + c7 p r^2 + c8 z

where primes mark the velocities estimated at the previous step.  Which
terms are active is configurable per vehicle; inactive terms are pinned to
zero weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

N_TERMS = {"u": 10, "v": 8, "w": 8}


@dataclass(frozen=True)
class Regressors:
    """One tick of model inputs."""

    rpm: float
    p: float
    q: float
    r: float
    z: float
    u_prev: float
    v_prev: float
    w_prev: float


def term_vector(channel: str, reg: Regressors) -> np.ndarray:
    p, q, r, z = reg.p, reg.q, reg.r, reg.z
    if channel == "u":
        return np.array([
            reg.rpm, reg.rpm ** 2, q * p * p, r * reg.v_prev ** 2,
            q * reg.w_prev ** 2, p * p, q * q, r * r, p * r * r, z,
        ])
    if channel == "v":
        return np.array([
            q * p * p, p * p, r * reg.u_prev ** 2, q * reg.u_prev ** 2,
            q * q, r * r, p * r * r, z,
        ])
    if channel == "w":
        return np.array([
            r * reg.u_prev ** 2, q * reg.u_prev ** 2, q * p * p, p * p,
            q * q, r * r, p * r * r, z,
        ])
    raise ValueError(f"unknown channel {channel!r}")


class RlsEstimator:
    """Exponentially weighted recursive least squares for one channel.

    ``active`` masks which regressor terms participate; inactive weights
    stay zero.  The covariance is re-symmetrized every update and reset if
    its trace blows past ``trace_limit``.
    """

    def __init__(self, n_terms: int, lam: float = 0.995,
                 p0: float = 1.0e4, trace_limit: float = 1.0e9,
                 active: Optional[Sequence[bool]] = None) -> None:
        if not 0.9 < lam <= 1.0:
            raise ValueError(f"forgetting factor must be in (0.9, 1], got {lam}")
        self.lam = lam
        self.p0 = p0
        self.trace_limit = trace_limit
        self.theta = np.zeros(n_terms)
        self.active = np.array(active if active is not None else [True] * n_terms)
        if self.active.shape != (n_terms,):
            raise ValueError("active mask length mismatch")
        self.cov = np.eye(n_terms) * p0
        self.resets = 0

    def predict(self, phi: np.ndarray) -> float:
        return float(self.theta @ (phi * self.active))

    def update(self, phi: np.ndarray, measured: float) -> float:
        """One RLS step; returns the prediction error before the update."""
        phi = phi * self.active
        err = measured - float(self.theta @ phi)
        denom = self.lam + float(phi @ self.cov @ phi)
        gain = (self.cov @ phi) / denom
        self.theta = self.theta + gain * err
        self.cov = (self.cov - np.outer(gain, phi @ self.cov)) / self.lam
        self.cov = 0.5 * (self.cov + self.cov.T)
        if np.trace(self.cov) > self.trace_limit:
            self.cov = np.eye(len(self.theta)) * self.p0
            self.resets += 1
        return err


@dataclass
class ModelParams:
    """Weights for the three velocity channels plus the RLS settings."""

    alpha: np.ndarray = field(default_factory=lambda: np.zeros(N_TERMS["u"]))
    beta: np.ndarray = field(default_factory=lambda: np.zeros(N_TERMS["v"]))
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(N_TERMS["w"]))
    lam: float = 0.995

    def __post_init__(self) -> None:
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.alpha.shape != (N_TERMS["u"],) or self.beta.shape != (
                N_TERMS["v"],) or self.gamma.shape != (N_TERMS["w"],):
            raise ValueError("bad parameter vector lengths")
        if not 0.9 < self.lam <= 1.0:
            raise ValueError("forgetting factor must be in (0.9, 1]")


class FlightModel:
    """Evaluates the velocity regression and optionally identifies it online."""

    def __init__(self, params: ModelParams,
                 active: Optional[Dict[str, Sequence[bool]]] = None) -> None:
        active = active or {}
        self.estimators = {
            "u": RlsEstimator(N_TERMS["u"], params.lam,
                              active=active.get("u")),
            "v": RlsEstimator(N_TERMS["v"], params.lam,
                              active=active.get("v")),
            "w": RlsEstimator(N_TERMS["w"], params.lam,
                              active=active.get("w")),
        }
        self.estimators["u"].theta = params.alpha.copy()
        self.estimators["v"].theta = params.beta.copy()
        self.estimators["w"].theta = params.gamma.copy()
        self.u = 0.0
        self.v = 0.0
        self.w = 0.0

    def predict(self, rpm: float, p: float, q: float, r: float,
                z: float) -> Tuple[float, float, float]:
        """Advance the model one tick and return (u, v, w)."""
        reg = Regressors(rpm=rpm, p=p, q=q, r=r, z=z,
                         u_prev=self.u, v_prev=self.v, w_prev=self.w)
        u = self.estimators["u"].predict(term_vector("u", reg))
        v = self.estimators["v"].predict(term_vector("v", reg))
        w = self.estimators["w"].predict(term_vector("w", reg))
        self.u, self.v, self.w = u, v, w
        return u, v, w

    def identify(self, reg: Regressors,
                 measured: Tuple[float, float, float]) -> Tuple[float, float, float]:
        """RLS update of all three channels from measured body velocities."""
        errs = (
            self.estimators["u"].update(term_vector("u", reg), measured[0]),
            self.estimators["v"].update(term_vector("v", reg), measured[1]),
            self.estimators["w"].update(term_vector("w", reg), measured[2]),
        )
        return errs

    @property
    def params(self) -> ModelParams:
        return ModelParams(alpha=self.estimators["u"].theta.copy(),
                           beta=self.estimators["v"].theta.copy(),
                           gamma=self.estimators["w"].theta.copy(),
                           lam=self.estimators["u"].lam)
