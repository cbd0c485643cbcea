"""Navigation manager: filter health supervision, re-initialization on large
drifts, and the published status word."""

from __future__ import annotations

import enum
import math
from collections import deque
from typing import Deque, Optional, Tuple


class NavStatus(enum.Enum):
    OK = "OK"
    REINIT = "REINIT"
    DEGRADED = "DEGRADED"


class NavManager:
    """Watches fix innovations and preprocessor health.

    A trusted fix disagreeing with the solution by more than
    ``reinit_mult`` times the solution's 1-sigma position uncertainty (with
    an absolute floor) resets the position states to the fix and inflates
    the covariance.  Repeated sensor-orientation mismatch flags, or a
    silent measurement stream, degrade the published status.
    """

    def __init__(self, reinit_mult: float = 10.0, reinit_floor: float = 5.0,
                 mismatch_limit: int = 3, watchdog: float = 5.0) -> None:
        self.reinit_mult = reinit_mult
        self.reinit_floor = reinit_floor
        self.mismatch_limit = mismatch_limit
        self.watchdog = watchdog
        self.reinit_count = 0
        self._mismatches: Deque[float] = deque(maxlen=64)
        self._last_meas_t = -math.inf
        self._status = NavStatus.OK

    def note_measurement(self, t: float) -> None:
        self._last_meas_t = t

    def note_mismatch(self, t: float) -> None:
        self._mismatches.append(t)

    def check_fix(self, fix_xy: Tuple[float, float],
                  solution_xy: Tuple[float, float],
                  pos_sigma: float) -> bool:
        """True when the fix demands a re-initialization."""
        miss = math.hypot(fix_xy[0] - solution_xy[0],
                          fix_xy[1] - solution_xy[1])
        threshold = max(self.reinit_mult * pos_sigma, self.reinit_floor)
        if miss > threshold:
            self.reinit_count += 1
            return True
        return False

    def status(self, t: float, reinitialized: bool = False) -> NavStatus:
        if reinitialized:
            self._status = NavStatus.REINIT
            return self._status
        recent = [m for m in self._mismatches if t - m < 60.0]
        if len(recent) >= self.mismatch_limit:
            self._status = NavStatus.DEGRADED
        elif t - self._last_meas_t > self.watchdog:
            self._status = NavStatus.DEGRADED
        else:
            self._status = NavStatus.OK
        return self._status
