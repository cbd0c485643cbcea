"""Offline calibration: derive the shipped default vehicle configuration.

Coordinate search over the appendage strengths, turn-drag shape and heading
gains, evaluated by running the paired fins-on/off reference pattern and
scoring the fitted turning metrics against the reference targets:

    radius fins-off  2.5 m        radius fins-on  1.5 m
    peak rate fins-on 25..35 deg/s    rate improvement 35..50 %

subject to the stability doctrine enforced at config load (unstable bare
hull, rudder-stabilized, valid fin window).  A recursive least squares pass
over a truth-navigation run identifies the flight-model weights that ship
in the [model] section.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..nav.flightmodel import RlsEstimator, Regressors, term_vector
from .config import Scenario, VehicleConfig, load_scenario
from .metrics import read_telemetry
from .runner import run_scenario

TARGET_RADIUS_OFF = 2.5
TARGET_RADIUS_ON = 1.5
TARGET_RATE_ON = 29.5       # deg/s, center of the 25-35 window
TARGET_IMPROVEMENT = 1.425  # center of the 35-50 % window


def _with_knobs(scenario: Scenario, knobs: Dict[str, float]) -> Scenario:
    veh = scenario.vehicle
    rudder = dataclasses.replace(veh.rudder,
                                 lift_per_angle=-abs(knobs["rudder_lift"]))
    fin = dataclasses.replace(
        veh.fin, lift_per_angle=-abs(knobs["rudder_lift"] * knobs["fin_ratio"]))
    params = dataclasses.replace(veh.plant_params,
                                 k_turn_drag=knobs["k_turn_drag"],
                                 r_sat=knobs["r_sat"])
    gains = {mode: dict(loops) for mode, loops in veh.gain_sets.items()}
    gains["cruise"]["heading"] = dataclasses.replace(
        gains["cruise"]["heading"], kp=knobs["heading_kp"],
        kd=knobs["heading_kd"])
    vehicle = dataclasses.replace(veh, rudder=rudder, fin=fin,
                                  plant_params=params, gain_sets=gains)
    return dataclasses.replace(scenario, vehicle=vehicle)


def evaluate_knobs(scenario: Scenario, knobs: Dict[str, float],
                   out_dir: Path) -> Dict[str, float]:
    """Run the fins-off/fins-auto pair and extract the four target metrics."""
    patched = _with_knobs(scenario, knobs)
    off = run_scenario(dataclasses.replace(patched, fins="off"), out_dir,
                       tag="cal_off")
    on = run_scenario(dataclasses.replace(patched, fins="auto"), out_dir,
                      tag="cal_on")
    if not off.metrics.turns or not on.metrics.turns:
        return {"radius_off": float("nan"), "radius_on": float("nan"),
                "rate_on": float("nan"), "peak_on": float("nan"),
                "improvement": float("nan")}
    return {
        "radius_off": off.metrics.mean_radius(),
        "radius_on": on.metrics.mean_radius(),
        "rate_on": on.metrics.mean_rate(),
        "peak_on": on.metrics.mean_peak_rate(),
        "improvement": on.metrics.mean_rate() / off.metrics.mean_rate(),
    }


def _loss(metrics: Dict[str, float]) -> float:
    if any(not math.isfinite(v) for v in metrics.values()):
        return 1.0e6
    loss = ((metrics["radius_off"] - TARGET_RADIUS_OFF) / 0.05) ** 2 \
        + ((metrics["radius_on"] - TARGET_RADIUS_ON) / 0.04) ** 2 \
        + ((metrics["rate_on"] - TARGET_RATE_ON) / 1.0) ** 2 \
        + ((metrics["improvement"] - TARGET_IMPROVEMENT) / 0.012) ** 2
    if metrics["peak_on"] > 38.0:
        loss += 100.0 * (metrics["peak_on"] - 38.0)
    return loss


def coordinate_search(scenario: Scenario, knobs: Dict[str, float],
                      steps: Dict[str, float], sweeps: int,
                      out_dir: Path) -> Tuple[Dict[str, float], Dict[str, float]]:
    best_metrics = evaluate_knobs(scenario, knobs, out_dir)
    best = _loss(best_metrics)
    for _ in range(max(sweeps, 0)):
        improved = False
        for name in knobs:
            for sign in (+1.0, -1.0):
                trial = dict(knobs)
                trial[name] += sign * steps[name]
                if trial["rudder_lift"] < 20.0 or not 0.3 < trial["fin_ratio"] < 1.3:
                    continue
                if trial["k_turn_drag"] < 0.05 or not 0.1 < trial["r_sat"] < 0.6:
                    continue
                if not 0.3 < trial["heading_kp"] < 3.0 or trial["heading_kd"] < 0.0:
                    continue
                metrics = evaluate_knobs(scenario, trial, out_dir)
                loss = _loss(metrics)
                if loss < best:
                    knobs, best, best_metrics = trial, loss, metrics
                    improved = True
        if not improved:
            steps = {k: v * 0.5 for k, v in steps.items()}
    return knobs, best_metrics


def identify_flight_model(scenario: Scenario,
                          out_dir: Path) -> Dict[str, np.ndarray]:
    """Fit the velocity-regression weights by RLS over a truth-nav run."""
    run = run_scenario(dataclasses.replace(scenario, nav_mode="truth",
                                           fins="auto"),
                       out_dir, tag="cal_ident")
    data = read_telemetry(run.csv_path)
    estimators = {"u": RlsEstimator(10, lam=1.0, p0=1.0e6),
                  "v": RlsEstimator(8, lam=1.0, p0=1.0e6),
                  "w": RlsEstimator(8, lam=1.0, p0=1.0e6)}
    n = len(data["t"])
    for i in range(1, n):
        reg = Regressors(rpm=data["act_rpm"][i], p=data["p"][i],
                         q=data["q"][i], r=data["r"][i], z=data["z"][i],
                         u_prev=data["u"][i - 1], v_prev=data["v"][i - 1],
                         w_prev=data["w"][i - 1])
        estimators["u"].update(term_vector("u", reg), data["u"][i])
        estimators["v"].update(term_vector("v", reg), data["v"][i])
        estimators["w"].update(term_vector("w", reg), data["w"][i])
    return {"alpha": estimators["u"].theta, "beta": estimators["v"].theta,
            "gamma": estimators["w"].theta}


def write_config(base_path: Path, out_path: Path, knobs: Dict[str, float],
                 model: Optional[Dict[str, np.ndarray]],
                 achieved: Dict[str, float]) -> None:
    ini = configparser.ConfigParser(inline_comment_prefixes=("#",))
    ini.read(base_path)
    ini["rudder"]["lift_per_angle"] = f"{-abs(knobs['rudder_lift']):.6f}"
    ini["fin"]["lift_per_angle"] = \
        f"{-abs(knobs['rudder_lift'] * knobs['fin_ratio']):.6f}"
    ini["surge"]["k_turn_drag"] = f"{knobs['k_turn_drag']:.6f}"
    ini["surge"]["r_sat"] = f"{knobs['r_sat']:.6f}"
    ini["gains.cruise.heading"]["kp"] = f"{knobs['heading_kp']:.6f}"
    ini["gains.cruise.heading"]["kd"] = f"{knobs['heading_kd']:.6f}"
    if model is not None:
        ini["model"]["alpha"] = " ".join(f"{v:.10g}" for v in model["alpha"])
        ini["model"]["beta"] = " ".join(f"{v:.10g}" for v in model["beta"])
        ini["model"]["gamma"] = " ".join(f"{v:.10g}" for v in model["gamma"])
    with Path(out_path).open("w") as fh:
        fh.write("# Calibrated vehicle configuration. Achieved metrics:\n")
        for key, value in sorted(achieved.items()):
            fh.write(f"#   {key} = {value:.4f}\n")
        ini.write(fh)


def calibrate_default_config(out_path: Optional[Path] = None,
                             sweeps: int = 3,
                             scenario_ref: str = "builtin:zigzag.cfg",
                             identify_model: bool = True) -> Dict:
    scenario = load_scenario(scenario_ref)
    veh = scenario.vehicle
    knobs = {
        "rudder_lift": abs(veh.rudder.lift_per_angle),
        "fin_ratio": abs(veh.fin.lift_per_angle / veh.rudder.lift_per_angle),
        "k_turn_drag": veh.plant_params.k_turn_drag,
        "r_sat": veh.plant_params.r_sat,
        "heading_kp": veh.gain_sets["cruise"]["heading"].kp,
        "heading_kd": veh.gain_sets["cruise"]["heading"].kd,
    }
    steps = {"rudder_lift": 10.0, "fin_ratio": 0.05, "k_turn_drag": 0.1,
             "r_sat": 0.03, "heading_kp": 0.1, "heading_kd": 0.05}
    with tempfile.TemporaryDirectory() as tmp:
        out_dir = Path(tmp)
        knobs, metrics = coordinate_search(scenario, knobs, steps, sweeps,
                                           out_dir)
        model = identify_flight_model(_with_knobs(scenario, knobs), out_dir) \
            if identify_model else None
    report = {"knobs": knobs, "achieved": metrics,
              "targets": {"radius_off": TARGET_RADIUS_OFF,
                          "radius_on": TARGET_RADIUS_ON,
                          "rate_on_deg_s": TARGET_RATE_ON,
                          "improvement": TARGET_IMPROVEMENT}}
    if out_path is not None:
        write_config(veh.source_path, out_path, knobs, model, metrics)
        report["written"] = str(out_path)
    return report
