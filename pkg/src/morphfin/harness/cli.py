"""Command line interface: run, compare, analyze, calibrate, serve.

Exit codes: 0 ok, 2 configuration error, 3 runtime abort, 4 safety-
triggered early end.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from ..gateway import (
    GatewayServer,
    HydromanBoundary,
    MessageBus,
    NAV_PORT,
    PAYLOAD_PORT,
    encode,
)
from ..nav import NavEngine
from ..plant import PlantAbort
from .config import ConfigError, load_scenario, load_vehicle_config
from .metrics import compare_metrics, comparison_table, compute_metrics, read_telemetry
from .runner import EXIT_ABORT, EXIT_CONFIG, run_scenario


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario, fins=args.fins, seed=args.seed,
                             nav_mode=args.nav)
    result = run_scenario(scenario, Path(args.out), tag=args.tag)
    agg = result.metrics.to_dict()["aggregate"]
    print(f"telemetry: {result.csv_path}")
    print(f"metrics:   {result.metrics_path}")
    print(f"turns: {len(result.metrics.turns)}  "
          f"mean radius: {agg['mean_radius']:.3f} m  "
          f"mean peak rate: {agg['mean_peak_rate_deg_s']:.2f} deg/s")
    if result.abort_reason:
        print(f"run ended early: {result.abort_reason}", file=sys.stderr)
    return result.exit_code


def _cmd_compare(args: argparse.Namespace) -> int:
    a = json.loads(Path(args.metrics_a).read_text())
    b = json.loads(Path(args.metrics_b).read_text())
    comparison = compare_metrics(a, b)
    print(comparison_table(comparison))
    if args.json:
        Path(args.json).write_text(json.dumps(comparison, indent=2,
                                              sort_keys=True) + "\n")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    data = read_telemetry(Path(args.csv))
    metrics = compute_metrics(data, mission_ref=args.mission or "",
                              fins=args.fins or "", seed=0)
    out = Path(args.out) if args.out else Path(args.csv).with_suffix(
        ".metrics.json")
    metrics.save(out)
    print(f"metrics: {out}")
    agg = metrics.to_dict()["aggregate"]
    print(f"turns: {len(metrics.turns)}  mean radius: "
          f"{agg['mean_radius']:.3f} m  mean peak rate: "
          f"{agg['mean_peak_rate_deg_s']:.2f} deg/s")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    from .calibrate import calibrate_default_config
    report = calibrate_default_config(out_path=Path(args.out) if args.out
                                      else None,
                                      sweeps=args.sweeps)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    vehicle = load_vehicle_config(args.vehicle)
    engine = NavEngine(vehicle.model_params, vehicle.nav)
    boundary = HydromanBoundary(engine)
    nav_bus = MessageBus()
    nav_server = GatewayServer(port=args.nav_port, bus=nav_bus)

    def on_sensor(msg):
        for out in boundary.ingest(msg):
            nav_bus.publish(out)

    nav_bus.subscribe("SENSOR_*", on_sensor)
    payload_server = GatewayServer(port=args.payload_port, bus=MessageBus())
    print(f"navigation boundary on :{nav_server.port}, "
          f"payload boundary on :{payload_server.port}")
    try:
        if args.duration > 0:
            time.sleep(args.duration)
        else:
            while True:
                time.sleep(1.0)
    except KeyboardInterrupt:
        pass
    finally:
        nav_server.close()
        payload_server.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morphfin",
        description="Morphing-fin AUV simulator and GNC stack")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario")
    run_p.add_argument("--scenario", default="builtin:zigzag.cfg")
    run_p.add_argument("--fins", choices=["on", "off", "auto"], default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--nav", choices=["truth", "hydroman"], default=None)
    run_p.add_argument("--out", default="runs")
    run_p.add_argument("--tag", default=None)
    run_p.set_defaults(func=_cmd_run)

    cmp_p = sub.add_parser("compare", help="compare two metrics files")
    cmp_p.add_argument("metrics_a")
    cmp_p.add_argument("metrics_b")
    cmp_p.add_argument("--json", default=None)
    cmp_p.set_defaults(func=_cmd_compare)

    an_p = sub.add_parser("analyze", help="recompute metrics from a CSV")
    an_p.add_argument("--csv", required=True)
    an_p.add_argument("--mission", default=None)
    an_p.add_argument("--fins", default=None)
    an_p.add_argument("--out", default=None)
    an_p.set_defaults(func=_cmd_analyze)

    cal_p = sub.add_parser("calibrate",
                           help="re-derive the default vehicle config")
    cal_p.add_argument("--out", default=None)
    cal_p.add_argument("--sweeps", type=int, default=3)
    cal_p.set_defaults(func=_cmd_calibrate)

    srv_p = sub.add_parser("serve", help="gateway-only mode for payloads")
    srv_p.add_argument("--vehicle", default="builtin:morpheus.cfg")
    srv_p.add_argument("--nav-port", type=int, default=NAV_PORT)
    srv_p.add_argument("--payload-port", type=int, default=PAYLOAD_PORT)
    srv_p.add_argument("--duration", type=float, default=0.0)
    srv_p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlantAbort as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
