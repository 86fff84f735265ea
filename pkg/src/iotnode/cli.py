"""Command line entry points.

    iotnode serve      run the emulated node + gateway
    iotnode telemetry serve
                       run the telemetry ingestion/read service
    iotnode replay     load a scenario file and print its aggregates

Exit codes: 0 clean shutdown, 1 configuration error, 2 bind error.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading
from pathlib import Path

from .clock import format_utc
from .gateway import (
    DEFAULT_LISTEN,
    BindError,
    GatewayConfig,
    GatewayConfigError,
    GatewayService,
    load_scenario,
)
from .telemetry import (
    DEFAULT_MIN_INTERVAL_S,
    DEFAULT_WRITE_KEY,
    TelemetryEntry,
    TelemetryServer,
    TelemetryStore,
    daily_aggregate,
    summarize,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BIND = 2

DEFAULT_TELEMETRY_LISTEN = "127.0.0.1:8428"

log = logging.getLogger("iotnode")


def _split_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise GatewayConfigError(f"listen address must be host:port, got {value!r}")
    return host, int(port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iotnode",
        description="Emulated sensor node, gateway, and telemetry service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the node gateway")
    serve.add_argument("--scenario", required=True, type=Path,
                       help="environment scenario CSV (ts,temp_c,rh_pct)")
    serve.add_argument("--listen", default=DEFAULT_LISTEN,
                       help=f"control listener host:port (default {DEFAULT_LISTEN})")
    serve.add_argument("--telemetry-url", default="http://127.0.0.1:8428",
                       help="base URL of the telemetry service")
    serve.add_argument("--api-key", default=DEFAULT_WRITE_KEY,
                       help="channel write key (IOTNODE_API_KEY overrides)")
    serve.add_argument("--interval", type=float, default=15.0,
                       help="sample interval in seconds (default 15)")
    serve.add_argument("--fake-clock", action="store_true",
                       help="replay the scenario instantly on simulated time")
    serve.add_argument("--plain-http", action="store_true",
                       help="serve control over a plain TCP listener instead "
                            "of the emulated Wi-Fi module")
    serve.add_argument("--app-dir", type=Path, default=None,
                       help="directory of dashboard files to serve under /app")
    serve.add_argument("--device-id", default="node-1")
    serve.add_argument("--device-name", default="node")
    serve.add_argument("--ssid", default="iotlab")
    serve.add_argument("--password", default="iotlab-pass")

    telemetry = sub.add_parser("telemetry", help="telemetry service commands")
    tsub = telemetry.add_subparsers(dest="telemetry_command", required=True)
    tserve = tsub.add_parser("serve", help="run the telemetry HTTP service")
    tserve.add_argument("--store", required=True, type=Path,
                        help="directory for channel files")
    tserve.add_argument("--listen", default=DEFAULT_TELEMETRY_LISTEN,
                        help=f"host:port (default {DEFAULT_TELEMETRY_LISTEN})")
    tserve.add_argument("--min-interval", type=float,
                        default=DEFAULT_MIN_INTERVAL_S,
                        help="seconds between accepted writes per channel "
                             "(0 disables)")

    replay = sub.add_parser("replay", help="load a scenario and report on it")
    replay.add_argument("--scenario", required=True, type=Path)
    replay.add_argument("--summary", action="store_true",
                        help="print aggregate statistics")
    return parser


def _install_stop_handler(request_stop) -> None:
    """Route SIGINT/SIGTERM to a stop request.

    Must run before the readiness line is printed, or a supervisor
    reacting to that line could kill the process mid-setup.
    """

    def handler(signum, frame):
        log.info("received %s, shutting down", signal.Signals(signum).name)
        request_stop()

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)


def _wait_for_stop(wait) -> None:
    while not wait(0.2):
        pass


def run_serve(args: argparse.Namespace) -> int:
    api_key = os.environ.get("IOTNODE_API_KEY") or args.api_key
    try:
        config = GatewayConfig(
            scenario_path=args.scenario,
            listen_address=args.listen,
            telemetry_base_url=args.telemetry_url,
            api_key=api_key,
            sample_interval_s=args.interval,
            device_id=args.device_id,
            device_name=args.device_name,
            ssid=args.ssid,
            password=args.password,
            fake_clock=args.fake_clock,
            plain_http=args.plain_http,
            app_dir=args.app_dir,
        )
        service = GatewayService(config)
    except GatewayConfigError as exc:
        print(f"iotnode: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        service.start()
    except BindError as exc:
        print(f"iotnode: {exc}", file=sys.stderr)
        return EXIT_BIND
    except GatewayConfigError as exc:
        print(f"iotnode: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    host, _ = config.host_port()
    _install_stop_handler(service.request_stop)
    print(f"control plane listening on http://{host}:{service.control_port}")
    _wait_for_stop(service.wait)
    service.stop()
    if isinstance(service.fatal, GatewayConfigError):
        print(f"iotnode: {service.fatal}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def run_telemetry_serve(args: argparse.Namespace) -> int:
    try:
        host, port = _split_listen(args.listen)
        store = TelemetryStore(args.store, min_interval_s=args.min_interval)
    except (GatewayConfigError, ValueError, OSError) as exc:
        print(f"iotnode: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not store.channels():
        channel = store.create_channel(write_key=DEFAULT_WRITE_KEY)
        print(f"created channel {channel.channel_id} "
              f"with write key {channel.write_key}")
    try:
        server = TelemetryServer(store, host, port)
    except OSError as exc:
        print(f"iotnode: cannot bind {args.listen}: {exc}", file=sys.stderr)
        return EXIT_BIND
    server.start()
    stop = threading.Event()
    _install_stop_handler(stop.set)
    print(f"telemetry service listening on {server.url}")
    _wait_for_stop(stop.wait)
    server.stop()
    return EXIT_OK


def run_replay(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except GatewayConfigError as exc:
        print(f"iotnode: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"loaded {len(scenario)} points spanning "
          f"{format_utc(scenario.start)} .. {format_utc(scenario.end)}")
    if not args.summary:
        return EXIT_OK
    entries = [
        TelemetryEntry(
            entry_id=i,
            created_at=point.at,
            fields={"field1": point.temperature_c, "field2": point.humidity_pct},
        )
        for i, point in enumerate(scenario.points, start=1)
    ]
    for label, field_id in (("temperature", "field1"), ("humidity", "field2")):
        stats = summarize(entries, field_id)
        print(f"{label}: mean_rounded={stats.mean_rounded} "
              f"min={stats.min} max={stats.max} count={stats.count}")
    print("daily temperature:")
    for day in daily_aggregate(entries, "field1"):
        print(f"  {day.date.isoformat()}: mean_rounded={day.mean_rounded} "
              f"min={day.min} max={day.max} count={day.count}")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("IOTNODE_LOG", "INFO").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that slot belongs to bind
        # failures here, so remap.
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    if args.command == "serve":
        return run_serve(args)
    if args.command == "telemetry":
        return run_telemetry_serve(args)
    if args.command == "replay":
        return run_replay(args)
    parser.error(f"unknown command {args.command!r}")
    return EXIT_CONFIG
