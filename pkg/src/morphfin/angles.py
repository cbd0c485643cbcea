"""Angle wrapping helpers shared by the control, plant and metrics code."""

import math


def wrap_pi(angle: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def wrap_deg(angle: float) -> float:
    """Wrap an angle in degrees to (-180, 180]."""
    wrapped = math.fmod(angle + 180.0, 360.0)
    if wrapped <= 0.0:
        wrapped += 360.0
    return wrapped - 180.0


def heading_error_deg(desired: float, actual: float) -> float:
    """Shortest signed heading error desired-actual, degrees in (-180, 180]."""
    return wrap_deg(desired - actual)
