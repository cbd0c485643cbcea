"""Linear sway/yaw maneuvering math for a torpedo hull with appendages.

Implements the coefficient bookkeeping for the classic linearized sway/yaw
model

    Y = (m - Yvdot)*vdot + (m*xg - Yrdot)*rdot - Yv*v + (m*U - Yr)*r
    N = (Izz - Nrdot)*rdot + (m*xg - Nvdot)*vdot - Nv*v + (m*xg*U - Nr)*r

together with the dynamic stability index

    C = -Yv*(m*xg*U - Nr) + Nv*(m*U - Yr)

and its factored form C = -Yv*(m*U - Yr)*(x_r - x_ac), where x_r is the
center of rotation and x_ac = Nv/Yv the aerodynamic center.  C > 0 means
directionally stable.

A control surface at longitudinal station s with side-force slope L (N/rad,
negative by convention) folds into the derivatives as

    Yv += L/U,  Yr += s*L/U,  Nv += s*L/U,  Nr += s^2*L/U

which is the contribution of the surface's local angle of attack under
combined sway and yaw.  A stern rudder (s < 0) raises C; a forward fin
placed between the bare-hull center of rotation and aerodynamic center
lowers C, trading stability for turn rate.  All quantities are SI; stations
are measured from the coefficient reference origin, positive forward.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

__all__ = [
    "AppendageKind",
    "Appendage",
    "HydroConfig",
    "StabilityReport",
    "StabilitySingularError",
    "aerodynamic_center",
    "center_of_rotation",
    "stability_index",
    "with_rudder",
    "with_fin",
    "steady_yaw_rate",
    "steady_sway_velocity",
    "min_stabilizing_rudder",
    "fin_placement_valid",
    "rudder_lift_per_angle",
    "stability_report",
]


class StabilitySingularError(ArithmeticError):
    """Raised when an operation divides by a vanishing stability index."""


class AppendageKind(enum.Enum):
    RUDDER = "rudder"
    FIN = "fin"


@dataclass(frozen=True)
class HydroConfig:
    """Mass properties plus linear sway/yaw derivatives of one configuration.

    A freshly loaded config holds bare-hull derivatives; ``with_rudder`` /
    ``with_fin`` return new configs with the appendage contributions folded
    in.  Derivatives are dimensional (kg/s, kg m/s, kg m^2/s as appropriate)
    and treated as speed-independent within the linear model.
    """

    m: float            # mass (kg)
    izz: float          # yaw inertia about origin (kg m^2)
    xg: float           # longitudinal CG station (m)
    yv_dot: float       # added mass, sway due to sway accel (kg)
    yr_dot: float       # added mass, sway due to yaw accel (kg m)
    nv_dot: float       # added inertia, yaw due to sway accel (kg m)
    nr_dot: float       # added inertia, yaw due to yaw accel (kg m^2)
    yv: float           # sway force per sway velocity (kg/s), always < 0
    yr: float           # sway force per yaw rate (kg m/s)
    nv: float           # yaw moment per sway velocity (kg m/s)
    nr: float           # yaw moment per yaw rate (kg m^2/s)
    rho: float = 1000.0  # water density (kg/m^3)

    def __post_init__(self) -> None:
        if self.m <= 0.0:
            raise ValueError(f"mass must be positive, got {self.m}")
        if self.izz <= 0.0:
            raise ValueError(f"yaw inertia must be positive, got {self.izz}")
        if self.rho <= 0.0:
            raise ValueError(f"density must be positive, got {self.rho}")
        if self.yv >= 0.0:
            raise ValueError(f"sway damping yv must be negative, got {self.yv}")


@dataclass(frozen=True)
class Appendage:
    """One control surface: a stern rudder pair or a forward fin pair.

    ``lift_per_angle`` is the side force per radian of deflection at speed
    ``u_ref`` (negative by convention).  ``station`` is the force application
    point: negative (aft) for a rudder, positive (forward) for a fin.
    """

    kind: AppendageKind
    lift_per_angle: float   # N/rad at u_ref, < 0
    station: float          # m from origin, rudder < 0, fin > 0
    area: float = 0.0       # planform area of one blade (m^2)
    cl_alpha: float = 0.0   # lift-coefficient slope (1/rad)
    u_ref: float = 1.0      # speed at which lift_per_angle holds (m/s)

    def __post_init__(self) -> None:
        if self.lift_per_angle > 0.0:
            raise ValueError("lift_per_angle must be non-positive (sign convention)")
        if self.u_ref <= 0.0:
            raise ValueError("u_ref must be positive")
        if self.kind is AppendageKind.RUDDER and self.station > 0.0:
            raise ValueError("rudder station must be aft of the origin")
        if self.kind is AppendageKind.FIN and self.station < 0.0:
            raise ValueError("fin station must be forward of the origin")

    def lift_at(self, u: float) -> float:
        """Side-force slope rescaled to speed ``u`` (quadratic in speed)."""
        return self.lift_per_angle * (u / self.u_ref) ** 2


@dataclass(frozen=True)
class StabilityReport:
    """Summary of one hull + appendage configuration at a given speed."""

    c: float              # composed stability index
    c_bare: float         # bare-hull stability index
    x_r: float            # composed center-of-rotation station (m)
    x_ac: float           # composed aerodynamic-center station (m)
    stable: bool
    r_per_delta: float    # steady yaw rate per rudder angle (1/s)


def aerodynamic_center(cfg: HydroConfig) -> float:
    """Station where the side force acts in pure sideslip: Nv/Yv."""
    if cfg.yv == 0.0:
        raise ValueError("aerodynamic center undefined: Yv is zero")
    return cfg.nv / cfg.yv


def center_of_rotation(cfg: HydroConfig, u: float) -> float:
    """Station where the side force acts in pure steady yaw."""
    denom = cfg.m * u - cfg.yr
    if denom <= 0.0:
        raise ValueError(
            f"center of rotation requires m*U - Yr > 0, got {denom:.6g}"
        )
    return (cfg.m * cfg.xg * u - cfg.nr) / denom


def stability_index(cfg: HydroConfig, u: float) -> float:
    """Dynamic stability index C; positive means directionally stable."""
    return -cfg.yv * (cfg.m * cfg.xg * u - cfg.nr) + cfg.nv * (cfg.m * u - cfg.yr)


def _with_lift(cfg: HydroConfig, lift: float, station: float, u: float) -> HydroConfig:
    a = lift / u
    return replace(
        cfg,
        yv=cfg.yv + a,
        yr=cfg.yr + station * a,
        nv=cfg.nv + station * a,
        nr=cfg.nr + station * station * a,
    )


def with_rudder(cfg: HydroConfig, rudder: Appendage, u: float) -> HydroConfig:
    """Fold the stern rudder's passive contribution into the derivatives."""
    if rudder.kind is not AppendageKind.RUDDER:
        raise ValueError("appendage is not a rudder")
    if u <= 0.0:
        raise ValueError("speed must be positive")
    return _with_lift(cfg, rudder.lift_per_angle, rudder.station, u)


def with_fin(
    cfg: HydroConfig, fin: Appendage, deploy_fraction: float, u: float
) -> HydroConfig:
    """Fold the forward fin in, scaled by its deployment fraction.

    Fraction 0 is fully retracted (identity); fraction 1 applies the full
    fin contribution; intermediate values scale the side-force slope
    linearly to model the deployment transient.
    """
    if fin.kind is not AppendageKind.FIN:
        raise ValueError("appendage is not a fin")
    if u <= 0.0:
        raise ValueError("speed must be positive")
    if not 0.0 <= deploy_fraction <= 1.0:
        raise ValueError(f"deploy_fraction must be in [0, 1], got {deploy_fraction}")
    if deploy_fraction == 0.0:
        return cfg
    return _with_lift(cfg, deploy_fraction * fin.lift_per_angle, fin.station, u)


def _control_forcing(
    rudder: Appendage,
    fin: Optional[Appendage],
    deploy_fraction: float,
) -> tuple[float, float]:
    """Side force and yaw moment per radian of rudder angle.

    The fin, when active, deflects opposite to the rudder (delta_f = -delta),
    so its force enters with reversed sign.
    """
    y_tot = rudder.lift_per_angle
    n_tot = rudder.station * rudder.lift_per_angle
    if fin is not None and deploy_fraction > 0.0:
        fl = deploy_fraction * fin.lift_per_angle
        y_tot -= fl
        n_tot -= fin.station * fl
    return y_tot, n_tot


def steady_yaw_rate(
    cfg_composed: HydroConfig,
    rudder: Appendage,
    fin: Optional[Appendage],
    delta: float,
    u: float,
    deploy_fraction: float = 1.0,
) -> float:
    """Steady-state yaw rate for rudder angle ``delta`` (rad), rad/s.

    ``cfg_composed`` must already include the passive contributions of the
    same rudder (and fin, at the same deployment) whose forcing is applied
    here.  Solves the steady 2x2 sway/yaw balance; the fin deflects opposite
    to the rudder.  Raises ``StabilitySingularError`` at the stability
    transition C = 0 where the steady turn rate is unbounded.
    """
    c = stability_index(cfg_composed, u)
    if c == 0.0:
        raise StabilitySingularError("stability index is zero (neutral stability)")
    y_tot, n_tot = _control_forcing(rudder, fin, deploy_fraction)
    return delta * (cfg_composed.nv * y_tot - cfg_composed.yv * n_tot) / c


def steady_sway_velocity(
    cfg_composed: HydroConfig,
    rudder: Appendage,
    fin: Optional[Appendage],
    delta: float,
    u: float,
    deploy_fraction: float = 1.0,
) -> float:
    """Steady-state sway velocity in the same turn as ``steady_yaw_rate``."""
    c = stability_index(cfg_composed, u)
    if c == 0.0:
        raise StabilitySingularError("stability index is zero (neutral stability)")
    y_tot, n_tot = _control_forcing(rudder, fin, deploy_fraction)
    num = y_tot * (cfg_composed.m * cfg_composed.xg * u - cfg_composed.nr) - (
        cfg_composed.m * u - cfg_composed.yr
    ) * n_tot
    return delta * num / c


def min_stabilizing_rudder(cfg_bare: HydroConfig, station: float, u: float) -> float:
    """Threshold rudder side-force slope (N/rad) that makes C exactly zero.

    The composed index is linear in the rudder strength, C(A) = C_b - A*G
    with A the slope over speed; any rudder stronger in magnitude than the
    returned threshold stabilizes an initially unstable hull.
    """
    if station > 0.0:
        raise ValueError("rudder station must be aft of the origin")
    xi = -station
    c_b = stability_index(cfg_bare, u)
    x_r_b = center_of_rotation(cfg_bare, u)
    x_ac_b = aerodynamic_center(cfg_bare)
    gain = (x_r_b + xi) * (cfg_bare.m * u - cfg_bare.yr) - cfg_bare.yv * xi * (
        x_ac_b + xi
    )
    if gain == 0.0:
        raise ValueError("rudder at this station cannot change the stability index")
    return (c_b / gain) * u


def fin_placement_valid(eta: float, cfg_bare: HydroConfig, u: float) -> bool:
    """Whether a fin at station ``eta`` sits strictly inside the window
    between the bare-hull center of rotation and aerodynamic center.

    The window is non-empty only for a bare hull that is directionally
    unstable (x_r < x_ac).
    """
    x_r_b = center_of_rotation(cfg_bare, u)
    x_ac_b = aerodynamic_center(cfg_bare)
    return x_r_b < eta < x_ac_b


def rudder_lift_per_angle(
    rho: float, cl_alpha: float, area_one_blade: float, u: float
) -> float:
    """Side-force slope of a two-bladed surface: -1/2 rho CLa (2S) U^2.

    Returned negative per the appendage sign convention.
    """
    if rho <= 0.0 or cl_alpha <= 0.0 or u <= 0.0 or area_one_blade < 0.0:
        raise ValueError("rho, cl_alpha and u must be positive; area non-negative")
    return -0.5 * rho * cl_alpha * (2.0 * area_one_blade) * u * u


def stability_report(
    cfg_bare: HydroConfig,
    rudder: Appendage,
    fin: Optional[Appendage],
    deploy_fraction: float,
    u: float,
) -> StabilityReport:
    """Compose the full configuration and summarize its stability state."""
    c_bare = stability_index(cfg_bare, u)
    cfg = with_rudder(cfg_bare, rudder, u)
    if fin is not None:
        cfg = with_fin(cfg, fin, deploy_fraction, u)
    c = stability_index(cfg, u)
    try:
        r_per_delta = steady_yaw_rate(cfg, rudder, fin, 1.0, u, deploy_fraction)
    except StabilitySingularError:
        r_per_delta = math.inf
    return StabilityReport(
        c=c,
        c_bare=c_bare,
        x_r=center_of_rotation(cfg, u),
        x_ac=aerodynamic_center(cfg),
        stable=c > 0.0,
        r_per_delta=r_per_delta,
    )
