"""Run metrics: circle fits of turn segments, turn-rate statistics,
navigation error statistics, and run-to-run comparison."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..angles import heading_error_deg

TELEMETRY_SCHEMA = "morphfin-telemetry v1"

TRUTH_COLS = ["u", "v", "w", "p", "q", "r", "phi", "theta", "psi", "x", "y",
              "z", "U"]
NAV_COLS = ["nav_x", "nav_y", "nav_z", "nav_vn", "nav_ve", "nav_vd",
            "nav_phi", "nav_theta", "nav_psi"]
DESIRED_COLS = ["des_heading", "des_speed", "des_depth"]
CORR_COLS = ["corr_psi", "corr_theta", "corr_phi", "corr_speed"]
ACT_COLS = ["act_uppr", "act_lowr", "act_port", "act_stbd", "act_fin_deploy",
            "act_fin_angle", "act_thrust", "act_rpm"]
ALL_COLS = ["t"] + TRUTH_COLS + NAV_COLS + DESIRED_COLS + CORR_COLS + \
    ACT_COLS + ["mode", "events"]


class DegenerateSegmentError(ValueError):
    """Track segment has no usable curvature (e.g. a straight line)."""


@dataclass(frozen=True)
class TurnFit:
    radius: float
    center_x: float
    center_y: float
    rms_residual: float


def fit_turn(x: Sequence[float], y: Sequence[float]) -> TurnFit:
    """Least-squares circle through the points: algebraic fit plus one
    Gauss-Newton refinement of (center, radius)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise DegenerateSegmentError("need at least 3 points")
    span = max(np.ptp(x), np.ptp(y))
    if span <= 0.0:
        raise DegenerateSegmentError("zero-extent segment")
    design = np.column_stack([2.0 * x, 2.0 * y, np.ones_like(x)])
    rhs = x * x + y * y
    sol, _, rank, sv = np.linalg.lstsq(design, rhs, rcond=None)
    if rank < 3 or sv[-1] < 1.0e-9 * sv[0]:
        raise DegenerateSegmentError("collinear segment")
    cx, cy, c = sol
    r_sq = c + cx * cx + cy * cy
    if r_sq <= 0.0:
        raise DegenerateSegmentError("algebraic fit collapsed")
    radius = math.sqrt(r_sq)
    if radius > 1.0e4 * span:
        raise DegenerateSegmentError("curvature indistinguishable from zero")
    # one Gauss-Newton step on the geometric residuals
    for _ in range(1):
        dx = x - cx
        dy = y - cy
        dist = np.hypot(dx, dy)
        dist = np.where(dist < 1.0e-12, 1.0e-12, dist)
        residual = dist - radius
        jac = np.column_stack([-dx / dist, -dy / dist,
                               -np.ones_like(dist)])
        step, *_ = np.linalg.lstsq(jac, -residual, rcond=None)
        cx += step[0]
        cy += step[1]
        radius += step[2]
    dist = np.hypot(x - cx, y - cy)
    rms = float(np.sqrt(np.mean((dist - radius) ** 2)))
    return TurnFit(radius=float(radius), center_x=float(cx),
                   center_y=float(cy), rms_residual=rms)


@dataclass
class TurnMetric:
    start_t: float
    end_t: float
    direction: str            # "starboard" | "port"
    swept_deg: float
    radius: float
    peak_rate_deg_s: float
    mean_rate_deg_s: float
    mean_speed: float


@dataclass
class RunMetrics:
    mission_ref: str = ""
    fins: str = ""
    seed: int = 0
    turns: List[TurnMetric] = field(default_factory=list)
    nav_rms_error: float = 0.0
    nav_max_error: float = 0.0

    def _by_side(self, side: str) -> List[TurnMetric]:
        return [t for t in self.turns if t.direction == side]

    def mean_radius(self, side: Optional[str] = None) -> float:
        turns = self.turns if side is None else self._by_side(side)
        if not turns:
            return float("nan")
        return float(np.mean([t.radius for t in turns]))

    def mean_peak_rate(self, side: Optional[str] = None) -> float:
        turns = self.turns if side is None else self._by_side(side)
        if not turns:
            return float("nan")
        return float(np.mean([t.peak_rate_deg_s for t in turns]))

    def mean_rate(self, side: Optional[str] = None) -> float:
        turns = self.turns if side is None else self._by_side(side)
        if not turns:
            return float("nan")
        return float(np.mean([t.mean_rate_deg_s for t in turns]))

    def to_dict(self) -> Dict:
        return {
            "mission_ref": self.mission_ref,
            "fins": self.fins,
            "seed": self.seed,
            "turns": [asdict(t) for t in self.turns],
            "aggregate": {
                "mean_radius": self.mean_radius(),
                "mean_radius_starboard": self.mean_radius("starboard"),
                "mean_radius_port": self.mean_radius("port"),
                "mean_peak_rate_deg_s": self.mean_peak_rate(),
                "mean_peak_rate_starboard": self.mean_peak_rate("starboard"),
                "mean_peak_rate_port": self.mean_peak_rate("port"),
                "mean_rate_deg_s": self.mean_rate(),
            },
            "nav": {"rms_error_m": self.nav_rms_error,
                    "max_error_m": self.nav_max_error},
        }

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2,
                                         sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# telemetry IO
# ---------------------------------------------------------------------------

def read_telemetry(path: Path) -> Dict[str, np.ndarray]:
    """Load a telemetry CSV into column arrays (strings for mode/events)."""
    path = Path(path)
    with path.open(newline="") as fh:
        first = fh.readline().strip()
        if first != f"# {TELEMETRY_SCHEMA}":
            raise ValueError(f"unknown telemetry schema line: {first!r}")
        reader = csv.reader(fh)
        header = next(reader)
        if header != ALL_COLS:
            raise ValueError("telemetry column mismatch")
        rows = list(reader)
    out: Dict[str, np.ndarray] = {}
    for i, col in enumerate(header):
        values = [row[i] for row in rows]
        if col in ("mode", "events"):
            out[col] = np.array(values, dtype=object)
        else:
            out[col] = np.array([float(v) for v in values])
    return out


# ---------------------------------------------------------------------------
# turn extraction
# ---------------------------------------------------------------------------

def segment_turns(data: Dict[str, np.ndarray],
                  min_sweep_deg: float = 90.0,
                  settle_deg: float = 5.0,
                  core_fraction: float = 0.7) -> List[TurnMetric]:
    """Extract per-turn metrics from telemetry columns.

    A turn starts where the desired heading changes, ends when the heading
    error settles below ``settle_deg`` (or the next change), and only turns
    sweeping at least ``min_sweep_deg`` are kept.  The circle is fitted on
    the core of the turn where |yaw rate| exceeds ``core_fraction`` of the
    segment peak, which excludes the entry/exit transients.
    """
    t = data["t"]
    des = data["des_heading"]
    psi = data["psi"]
    r = data["r"]
    x = data["x"]
    y = data["y"]
    u = data["u"]
    v = data["v"]
    changes = [i for i in range(1, len(t)) if des[i] != des[i - 1]]
    turns: List[TurnMetric] = []
    for idx, i0 in enumerate(changes):
        i_end = changes[idx + 1] if idx + 1 < len(changes) else len(t)
        settle = i_end
        for i in range(i0, i_end):
            err = heading_error_deg(des[i], math.degrees(psi[i]))
            if abs(err) < settle_deg:
                settle = i
                break
        window = slice(i0, max(settle, i0 + 10))
        rates = np.abs(r[window])
        if len(rates) < 10:
            continue
        swept = math.degrees(float(np.sum(np.abs(r[window])) *
                                   np.median(np.diff(t)))) if len(t) > 1 else 0.0
        if swept < min_sweep_deg:
            continue
        peak = rates.max()
        core = np.flatnonzero(rates >= core_fraction * peak)
        core_idx = np.arange(window.start, window.stop)[core]
        try:
            fit = fit_turn(x[core_idx], y[core_idx])
        except DegenerateSegmentError:
            continue
        net = math.degrees(float(np.sum(r[window])) *
                           float(np.median(np.diff(t))))
        turns.append(TurnMetric(
            start_t=float(t[i0]),
            end_t=float(t[window.stop - 1]),
            direction="starboard" if net > 0.0 else "port",
            swept_deg=float(swept),
            radius=fit.radius,
            peak_rate_deg_s=float(math.degrees(peak)),
            mean_rate_deg_s=float(math.degrees(rates[core].mean())),
            mean_speed=float(np.hypot(u[core_idx], v[core_idx]).mean()),
        ))
    return turns


def compute_metrics(data: Dict[str, np.ndarray], mission_ref: str = "",
                    fins: str = "", seed: int = 0) -> RunMetrics:
    metrics = RunMetrics(mission_ref=mission_ref, fins=fins, seed=seed)
    metrics.turns = segment_turns(data)
    err = np.hypot(data["nav_x"] - data["x"], data["nav_y"] - data["y"])
    if len(err):
        metrics.nav_rms_error = float(np.sqrt(np.mean(err ** 2)))
        metrics.nav_max_error = float(err.max())
    return metrics


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

def compare_metrics(a: Dict, b: Dict) -> Dict:
    """Side-by-side comparison of two metrics dicts (e.g. fins off vs on).

    Both runs must share the mission.  Deltas are percentages of run A.
    """
    if a["mission_ref"] != b["mission_ref"]:
        raise ValueError("runs do not share a mission file")

    def delta(key: str) -> Optional[float]:
        va, vb = a["aggregate"][key], b["aggregate"][key]
        if va is None or vb is None or not math.isfinite(va) or va == 0.0 \
                or not math.isfinite(vb):
            return None
        return 100.0 * (vb - va) / abs(va)

    keys = ["mean_radius", "mean_radius_starboard", "mean_radius_port",
            "mean_peak_rate_deg_s", "mean_peak_rate_starboard",
            "mean_peak_rate_port", "mean_rate_deg_s"]
    return {
        "mission_ref": a["mission_ref"],
        "run_a": {"fins": a["fins"], **a["aggregate"]},
        "run_b": {"fins": b["fins"], **b["aggregate"]},
        "delta_pct": {k: delta(k) for k in keys},
    }


def comparison_table(comparison: Dict) -> str:
    lines = [
        f"mission: {comparison['mission_ref']}",
        f"{'metric':<28}{'run A':>12}{'run B':>12}{'delta %':>10}",
    ]
    a, b, d = comparison["run_a"], comparison["run_b"], comparison["delta_pct"]
    lines.append(f"{'fins':<28}{a['fins']:>12}{b['fins']:>12}{'':>10}")
    for key in d:
        va, vb, dv = a.get(key), b.get(key), d[key]
        fmt = lambda val: "n/a" if val is None or not math.isfinite(val) \
            else f"{val:.3f}"
        lines.append(f"{key:<28}{fmt(va):>12}{fmt(vb):>12}"
                     f"{fmt(dv) if dv is not None else 'n/a':>10}")
    return "\n".join(lines)
