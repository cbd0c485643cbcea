"""Sensor measurement variants exchanged between the plant, the navigation
engine and the gateway boundary."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class DepthMeas:
    z: float        # m, positive down
    t: float        # s


@dataclass(frozen=True)
class ImuMeas:
    phi: float      # rad
    theta: float    # rad
    psi: float      # rad
    p: float        # rad/s
    q: float        # rad/s
    r: float        # rad/s
    t: float        # s


@dataclass(frozen=True)
class GpsFix:
    x: float        # m north
    y: float        # m east
    t: float        # s


@dataclass(frozen=True)
class LblFix:
    """Acoustic position fix, valid at t_n but received at t_rx."""

    x: float        # m north at t_n
    y: float        # m east at t_n
    t_n: float      # s, time the position was true
    t_rx: float     # s, time of arrival


@dataclass(frozen=True)
class DvlMeas:
    vx: float       # m/s
    vy: float       # m/s
    vz: float       # m/s
    t: float        # s
    frame: str = "body"  # sensor mount frame tag


@dataclass(frozen=True)
class RpmMeas:
    """Propeller speed sample, a flight-model regressor input."""

    rpm: float
    t: float


Measurement = Union[DepthMeas, ImuMeas, GpsFix, LblFix, DvlMeas, RpmMeas]


def timestamp_of(m: Measurement) -> float:
    """Arrival timestamp used for queue ordering."""
    if isinstance(m, LblFix):
        return m.t_rx
    return m.t
