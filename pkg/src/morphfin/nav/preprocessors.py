"""Sensor preprocessors: depth outlier rejection and smoothing, DVL frame
handling with ice-drift compensation, and latent-fix extrapolation."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Tuple

from ..measurements import DepthMeas, DvlMeas, LblFix


class DepthFilter:
    """Outlier rejection followed by a moving average.

    A sample implying a depth rate above ``max_rate`` (default 5 m/s)
    relative to the last accepted sample is discarded; accepted samples
    feed a ``window``-sample moving average.
    """

    def __init__(self, max_rate: float = 5.0, window: int = 20) -> None:
        if max_rate <= 0.0 or window < 1:
            raise ValueError("max_rate must be positive, window >= 1")
        self.max_rate = max_rate
        self.window = window
        self._samples: Deque[float] = deque(maxlen=window)
        self._last_accepted: Optional[DepthMeas] = None
        self.rejected = 0

    def update(self, meas: DepthMeas) -> Optional[float]:
        """Feed one sample; returns the filtered depth or None before any
        sample has been accepted."""
        last = self._last_accepted
        if last is not None and meas.t > last.t:
            rate = abs(meas.z - last.z) / (meas.t - last.t)
            if rate > self.max_rate:
                self.rejected += 1
                return self.value
        self._last_accepted = meas
        self._samples.append(meas.z)
        return self.value

    @property
    def value(self) -> Optional[float]:
        if not self._samples:
            return None
        return sum(self._samples) / len(self._samples)


@dataclass(frozen=True)
class DvlResult:
    vx: float
    vy: float
    vz: float
    earth_relative: bool     # True when ice drift was compensated
    mismatch_flag: bool


class DvlPreprocessor:
    """Rotates DVL measurements from the mount frame into the body frame and
    optionally removes surface-ice drift for upward-facing operation.

    A persistent lateral velocity while the vehicle reports straight-line
    motion indicates a misconfigured mount orientation; that raises the
    mismatch flag consumed by the navigation manager.
    """

    def __init__(self, mount_yaw: float = 0.0,
                 mismatch_threshold: float = 0.3,
                 mismatch_window: int = 100) -> None:
        self.mount_yaw = mount_yaw
        self.mismatch_threshold = mismatch_threshold
        self._lateral: Deque[float] = deque(maxlen=mismatch_window)
        self.mismatch_count = 0

    def process(self, meas: DvlMeas, yaw_rate: float = 0.0,
                ice_drift: Optional[Tuple[float, float]] = None) -> DvlResult:
        cm, sm = math.cos(self.mount_yaw), math.sin(self.mount_yaw)
        # inverse of the mount rotation
        vx = cm * meas.vx - sm * meas.vy
        vy = sm * meas.vx + cm * meas.vy
        vz = meas.vz
        earth_relative = False
        if ice_drift is not None:
            # upward-facing lock is relative to drifting ice; adding the
            # drift recovers the earth-relative velocity
            vx += ice_drift[0]
            vy += ice_drift[1]
            earth_relative = True

        flag = False
        if abs(yaw_rate) < 0.02:      # straight-line motion
            self._lateral.append(vy)
            if (len(self._lateral) == self._lateral.maxlen
                    and abs(sum(self._lateral) / len(self._lateral))
                    > self.mismatch_threshold):
                flag = True
                self.mismatch_count += 1
                self._lateral.clear()
        return DvlResult(vx=vx, vy=vy, vz=vz, earth_relative=earth_relative,
                         mismatch_flag=flag)


class LblExtrapolator:
    """Brings latent position fixes up to the present using the model track.

    The corrected fix is fix(t_n) plus the model's displacement between t_n
    and now:  x(t) = x_fix(t_n) + (x_model(t) - x_model(t_n)).  The model
    track is kept in a decimated ring buffer so fixes lagged by several
    minutes remain usable.
    """

    def __init__(self, horizon: float = 600.0, decimation: float = 1.0) -> None:
        self.horizon = horizon
        self.decimation = decimation
        self._track: List[Tuple[float, float, float]] = []
        self.rejected = 0

    def record(self, t: float, x: float, y: float) -> None:
        if self._track and t - self._track[-1][0] < self.decimation - 1e-9:
            return
        self._track.append((t, x, y))
        cutoff = t - self.horizon
        while len(self._track) > 2 and self._track[1][0] <= cutoff:
            self._track.pop(0)

    def _interp(self, t: float) -> Optional[Tuple[float, float]]:
        if not self._track or t < self._track[0][0] - 1e-9:
            return None
        prev = self._track[0]
        for entry in self._track:
            if entry[0] >= t:
                t0, x0, y0 = prev
                t1, x1, y1 = entry
                if t1 == t0:
                    return (x1, y1)
                f = (t - t0) / (t1 - t0)
                return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))
            prev = entry
        return (self._track[-1][1], self._track[-1][2])

    def extrapolate(self, fix: LblFix, now: float,
                    model_now: Tuple[float, float]) -> Optional[Tuple[float, float]]:
        """Returns the fix translated to ``now``, or None if t_n predates
        the track buffer (the fix is rejected and counted)."""
        then = self._interp(fix.t_n)
        if then is None:
            self.rejected += 1
            return None
        return (fix.x + (model_now[0] - then[0]),
                fix.y + (model_now[1] - then[1]))
