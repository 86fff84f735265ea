"""Glue layer: sample loop, modem-session HTTP bridge, telemetry push,
service lifecycle.

The moving parts mirror the demonstrator board:

* `NodeFirmware` speaks the AT dialect over the emulated UART: it boots the
  module (reset, station mode, join, multi-connection, server), then turns
  inbound `+IPD` payloads into control-plane requests and sends responses
  back through the CIPSEND data phase.
* `push_cycle` is one beat of the sensor loop: tick the schedule, sample
  the scenario, run the reading through the single-wire codec round-trip,
  and push it upstream. A checksum failure drops the sample; a transport
  failure rolls the schedule back so the next beat retries with a fresh
  sample; an auth failure is a fatal configuration error.
* `GatewayService` wires device, modem (or a plain TCP listener), firmware,
  and sampler together and handles graceful shutdown.
"""

from __future__ import annotations

import csv
import logging
import re
import socketserver
import threading
import time
from collections import deque
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional

from . import control, dht11
from .clock import FakeClock, WallClock, parse_utc
from .device import (
    DEFAULT_SAMPLE_INTERVAL_S,
    DeviceNode,
    DeviceState,
    NoScenarioDataError,
    ReadingRangeError,
    Scenario,
    ScenarioPoint,
    SensorReading,
    sample_environment,
)
from .telemetry.client import PushError, TelemetryClient
from .telemetry.store import AuthError
from .wifi.link import SEND_MAX_BYTES, AccessPoint
from .wifi.modem import AtModem, SerialEndpoint, StreamClosed, serial_pair

log = logging.getLogger(__name__)

_KEY_RE = re.compile(r"^[A-Z0-9]{16}$")

DEFAULT_LISTEN = "127.0.0.1:8266"
#: How often the sampler wakes to check the schedule, in wall seconds.
SAMPLER_POLL_S = 1.0


class GatewayError(Exception):
    pass


class GatewayConfigError(GatewayError):
    """Bad configuration: wrong key format, unreadable scenario, rejected
    credentials. CLI exit code 1."""


class BindError(GatewayError):
    """The control listener could not bind. CLI exit code 2."""


class FirmwareError(GatewayError):
    """The emulated module answered ERROR to a boot-sequence command."""


@dataclass(frozen=True)
class GatewayConfig:
    scenario_path: Path
    listen_address: str = DEFAULT_LISTEN
    telemetry_base_url: str = "http://127.0.0.1:8428"
    api_key: str = ""
    sample_interval_s: float = DEFAULT_SAMPLE_INTERVAL_S
    device_id: str = "node-1"
    device_name: str = "node"
    ssid: str = "iotlab"
    password: str = "iotlab-pass"
    fake_clock: bool = False
    plain_http: bool = False
    app_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.sample_interval_s < 1.0:
            raise GatewayConfigError(
                f"sample interval must be >= 1 s, got {self.sample_interval_s}"
            )
        if not _KEY_RE.match(self.api_key):
            raise GatewayConfigError(
                "api key must be 16 uppercase alphanumerics"
            )
        self.host_port()

    def host_port(self) -> tuple[str, int]:
        host, sep, port = self.listen_address.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise GatewayConfigError(
                f"listen address must be host:port, got {self.listen_address!r}"
            )
        return host, int(port)


def load_scenario(path: Path | str) -> Scenario:
    """Read a `ts,temp_c,rh_pct` CSV into a Scenario.

    Any malformed row aborts with an error naming its line number; a file
    with no data rows is an error of its own.
    """
    path = Path(path)
    if not path.is_file():
        raise GatewayConfigError(f"scenario file {path} does not exist")
    points = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise GatewayConfigError(f"{path}: empty scenario file") from None
        if [c.strip() for c in header] != ["ts", "temp_c", "rh_pct"]:
            raise GatewayConfigError(
                f"{path}:1: header must be ts,temp_c,rh_pct, got {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise GatewayConfigError(
                    f"{path}:{lineno}: expected 3 columns, got {len(row)}"
                )
            try:
                at = parse_utc(row[0].strip())
                temp = int(row[1])
                hum = int(row[2])
                SensorReading(temp, hum)  # range check with a line number
            except (ValueError, ReadingRangeError) as exc:
                raise GatewayConfigError(f"{path}:{lineno}: {exc}") from exc
            points.append(ScenarioPoint(at, temp, hum))
    if not points:
        raise GatewayConfigError(f"{path}: no data rows")
    try:
        return Scenario(points)
    except ValueError as exc:
        # Re-locate ordering violations to the offending line.
        for i in range(1, len(points)):
            if points[i].at <= points[i - 1].at:
                raise GatewayConfigError(
                    f"{path}:{i + 2}: timestamp {points[i].at} does not "
                    f"increase over the previous row"
                ) from exc
        raise GatewayConfigError(f"{path}: {exc}") from exc


PulseChannel = Callable[[list[float]], list[float]]


def push_cycle(
    node: DeviceNode,
    scenario: Scenario,
    client: TelemetryClient,
    now: datetime,
    *,
    pulse_channel: Optional[PulseChannel] = None,
) -> bool:
    """One beat of the sample-and-push loop; True when an entry was stored.

    ``pulse_channel`` lets tests distort the sensor's pulse train between
    encode and decode (the single-wire line in the real build).
    """
    previous = node.snapshot().last_sample_at
    if not node.tick(now):
        return False
    try:
        reading = sample_environment(scenario, now)
    except NoScenarioDataError:
        # Scheduled before the scenario starts: nothing to read yet.
        return False
    pulses = dht11.frame_to_pulses(dht11.encode_frame(reading))
    if pulse_channel is not None:
        pulses = pulse_channel(pulses)
    try:
        frame = dht11.pulses_to_frame(pulses)
        decoded = dht11.decode_frame(frame.to_bytes(), taken_at=now)
    except dht11.CodecError as exc:
        # Corrupted read: drop the sample, keep the schedule. The next
        # cycle reads fresh values.
        log.warning("dropping corrupted sensor read at %s: %s", now, exc)
        return False
    node.store_reading(decoded)
    try:
        entry_id = client.push(decoded, at=now)
    except AuthError:
        raise GatewayConfigError(
            "telemetry service rejected the api key; check --api-key"
        ) from None
    except PushError as exc:
        # Transport fault: roll the schedule back so the next beat retries
        # with a fresh (superseding) sample.
        log.warning("telemetry push failed, will retry: %s", exc)
        node.untick(previous)
        return False
    if entry_id is None:
        log.info("telemetry rate-limited the sample at %s", now)
        return False
    log.debug("pushed %s as entry %d", decoded, entry_id)
    return True


# -- modem-session firmware ----------------------------------------------


@dataclass(frozen=True)
class Line:
    text: str


@dataclass(frozen=True)
class Ipd:
    session: int
    payload: bytes


@dataclass(frozen=True)
class Connect:
    session: int


@dataclass(frozen=True)
class Closed:
    session: int


@dataclass(frozen=True)
class Prompt:
    pass


_EVENT_LINE = re.compile(r"^(\d+),(CONNECT|CLOSED)$")
_TERMINALS = frozenset({"OK", "ERROR", "SEND OK", "SEND FAIL"})


class NodeFirmware:
    """Host-side driver for the emulated module.

    Single-threaded: `boot` runs the join-and-listen sequence, then `run`
    loops on serial events, bridging complete HTTP requests from sessions
    into the control plane. Unsolicited events that arrive while a command
    is awaiting its terminal line are queued, never lost.
    """

    def __init__(
        self,
        serial: SerialEndpoint,
        node: DeviceNode,
        *,
        ssid: str,
        password: str,
        port: int,
        device_name: str = "node",
        clock=None,
        static_root: Optional[Path] = None,
        command_timeout: float = 5.0,
    ) -> None:
        self._serial = serial
        self._node = node
        self._ssid = ssid
        self._password = password
        self._port = port
        self._device_name = device_name
        self._clock = clock if clock is not None else WallClock()
        self._static_root = static_root
        self._timeout = command_timeout
        self._pending: deque = deque()
        self._buffers: dict[int, bytearray] = {}
        self._running = False
        self.station_ip: Optional[str] = None

    # -- serial event parsing -------------------------------------------

    def _next_event(self, timeout: float):
        """Read one event off the serial line: a response/status line, an
        inbound data frame, a connect/close notice, or the send prompt."""
        first = self._serial.read_exact(1, timeout)
        if first in (b"\r", b"\n"):
            return None
        if first == b">":
            self._serial.read_exact(1, timeout)
            return Prompt()
        if first == b"+":
            head = first + self._serial.read_until(b":", timeout)
            if head.startswith(b"+IPD,"):
                sid_raw, _, len_raw = head[5:-1].partition(b",")
                payload = self._serial.read_exact(int(len_raw), timeout)
                return Ipd(int(sid_raw), payload)
            rest = self._serial.read_until(b"\r\n", timeout)
            return Line((head + rest).strip().decode("ascii", "replace"))
        rest = self._serial.read_until(b"\r\n", timeout)
        text = (first + rest).strip().decode("ascii", "replace")
        if not text:
            return None
        match = _EVENT_LINE.match(text)
        if match:
            sid = int(match.group(1))
            return Connect(sid) if match.group(2) == "CONNECT" else Closed(sid)
        return Line(text)

    def _await_line(self, timeout: float) -> str:
        """Next response line, queueing any unsolicited events."""
        deadline = self._deadline(timeout)
        while True:
            event = self._next_event(self._remaining(deadline))
            if isinstance(event, Line):
                return event.text
            if event is not None:
                self._pending.append(event)

    def _await_prompt(self, timeout: float) -> None:
        deadline = self._deadline(timeout)
        while True:
            event = self._next_event(self._remaining(deadline))
            if isinstance(event, Prompt):
                return
            if event is not None:
                self._pending.append(event)

    @staticmethod
    def _deadline(timeout: float) -> float:
        return time.monotonic() + timeout

    @staticmethod
    def _remaining(deadline: float) -> float:
        return max(0.001, deadline - time.monotonic())

    def _command(self, line: str) -> list[str]:
        """Send one command, collect lines through its terminal."""
        self._serial.write(line.encode("ascii") + b"\r\n")
        collected: list[str] = []
        deadline = self._deadline(self._timeout)
        while True:
            try:
                text = self._await_line(self._remaining(deadline))
            except TimeoutError:
                raise FirmwareError(
                    f"module gave no terminal response to {line!r}"
                ) from None
            collected.append(text)
            if text in _TERMINALS:
                return collected

    # -- boot sequence ---------------------------------------------------

    def boot(self) -> None:
        """Wait for the power-on banner, then bring the three layers up:
        join the access point, enable multi-connection, start the server."""
        banner_deadline = self._deadline(self._timeout)
        while True:
            try:
                event = self._next_event(self._remaining(banner_deadline))
            except TimeoutError:
                raise FirmwareError("no boot banner from the module") from None
            if isinstance(event, Line) and event.text == "ready":
                break
        if self._command("AT")[-1] != "OK":
            raise FirmwareError("module not answering AT")
        if self._command("AT+CWMODE=1")[-1] != "OK":
            raise FirmwareError("could not enter station mode")
        joined = self._command(
            f'AT+CWJAP="{self._ssid}","{self._password}"'
        )
        if joined[-1] != "OK":
            raise GatewayConfigError(
                f"access point rejected ssid {self._ssid!r}"
            )
        cifsr = self._command("AT+CIFSR")
        if cifsr[-1] == "OK":
            for text in cifsr:
                if text.startswith("+CIFSR:STAIP,"):
                    self.station_ip = text.split(",", 1)[1].strip('"')
        if self._command("AT+CIPMUX=1")[-1] != "OK":
            raise FirmwareError("could not enable multi-connection mode")
        if self._command(f"AT+CIPSERVER=1,{self._port}")[-1] != "OK":
            raise BindError(
                f"module could not open a server on port {self._port}"
            )
        log.info(
            "node online at %s, serving on port %d",
            self.station_ip,
            self._port,
        )

    # -- request bridging ------------------------------------------------

    def run(self, stop: threading.Event) -> None:
        self._running = True
        while not stop.is_set():
            try:
                if self._pending:
                    self._dispatch(self._pending.popleft())
                    continue
                event = self._next_event(0.1)
            except TimeoutError:
                continue
            except StreamClosed:
                return
            except FirmwareError as exc:
                log.warning("session handling hiccup: %s", exc)
                continue
            if event is not None:
                self._dispatch(event)

    def _dispatch(self, event) -> None:
        if isinstance(event, Connect):
            self._buffers[event.session] = bytearray()
        elif isinstance(event, Closed):
            self._buffers.pop(event.session, None)
        elif isinstance(event, Ipd):
            buffer = self._buffers.setdefault(event.session, bytearray())
            buffer.extend(event.payload)
            if b"\r\n\r\n" in buffer:
                request = bytes(buffer)
                self._buffers.pop(event.session, None)
                self._serve_session(event.session, request)
        elif isinstance(event, Line):
            log.debug("unsolicited line: %s", event.text)

    def _serve_session(self, sid: int, request: bytes) -> None:
        response = control.handle_http_request(
            request,
            self._node,
            device_name=self._device_name,
            now=self._clock.now(),
            static_root=self._static_root,
        )
        try:
            for offset in range(0, len(response), SEND_MAX_BYTES):
                chunk = response[offset : offset + SEND_MAX_BYTES]
                opened = self._command(f"AT+CIPSEND={sid},{len(chunk)}")
                if opened[-1] != "OK":
                    log.info("session %d vanished before send", sid)
                    return
                self._await_prompt(self._timeout)
                self._serial.write(chunk)
                result = self._await_terminal()
                if result != "SEND OK":
                    log.info("send to session %d failed: %s", sid, result)
                    return
        finally:
            try:
                # ERROR here just means the peer closed first.
                self._command(f"AT+CIPCLOSE={sid}")
            except (TimeoutError, FirmwareError, StreamClosed):
                pass

    def _await_terminal(self) -> str:
        deadline = self._deadline(self._timeout)
        while True:
            text = self._await_line(self._remaining(deadline))
            if text in _TERMINALS:
                return text


# -- plain TCP transport -------------------------------------------------


class _PlainControlServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    # Bursts of short-lived clients overflow the default backlog of 5 and
    # stall connects behind kernel SYN retries.
    request_queue_size = 128

    def __init__(self, address, node, device_name, clock, static_root):
        self.node = node
        self.device_name = device_name
        self.clock = clock
        self.static_root = static_root
        super().__init__(address, _PlainControlHandler)


class _PlainControlHandler(socketserver.StreamRequestHandler):
    server: _PlainControlServer

    def handle(self) -> None:
        data = bytearray()
        self.connection.settimeout(5.0)
        try:
            while b"\r\n\r\n" not in data:
                chunk = self.connection.recv(2048)
                if not chunk:
                    break
                data.extend(chunk)
        except OSError:
            return
        if not data:
            return
        response = control.handle_http_request(
            bytes(data),
            self.server.node,
            device_name=self.server.device_name,
            now=self.server.clock.now(),
            static_root=self.server.static_root,
        )
        try:
            self.connection.sendall(response)
        except OSError:
            pass


# -- service -------------------------------------------------------------


class GatewayService:
    """Everything running: device node, control transport, sampler."""

    def __init__(self, config: GatewayConfig, *, clock=None):
        self.config = config
        self.scenario = load_scenario(config.scenario_path)
        if clock is not None:
            self.clock = clock
        elif config.fake_clock:
            self.clock = FakeClock(self.scenario.start)
        else:
            self.clock = WallClock()
        self.node = DeviceNode(
            DeviceState.initial(
                config.device_id,
                sample_interval_s=config.sample_interval_s,
            ),
            scenario=self.scenario,
        )
        self.telemetry = TelemetryClient(
            config.telemetry_base_url, config.api_key
        )
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._modem: Optional[AtModem] = None
        self._firmware: Optional[NodeFirmware] = None
        self._plain: Optional[_PlainControlServer] = None
        self._control_port: Optional[int] = None
        #: Set when a background thread dies of a configuration problem.
        self.fatal: Optional[GatewayError] = None

    @property
    def control_port(self) -> Optional[int]:
        return self._control_port

    @property
    def control_url(self) -> str:
        host, _ = self.config.host_port()
        return f"http://{host}:{self._control_port}"

    def start(self) -> "GatewayService":
        host, port = self.config.host_port()
        if self.config.plain_http:
            try:
                self._plain = _PlainControlServer(
                    (host, port),
                    self.node,
                    self.config.device_name,
                    self.clock,
                    self.config.app_dir,
                )
            except OSError as exc:
                raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
            self._control_port = self._plain.server_address[1]
            thread = threading.Thread(
                target=self._plain.serve_forever,
                name="control-plain",
                daemon=True,
            )
            thread.start()
            self._threads.append(thread)
        else:
            host_end, modem_end = serial_pair()
            self._modem = AtModem(
                modem_end,
                ap=AccessPoint(self.config.ssid, self.config.password),
                bind_host=host,
            )
            self._modem.start()
            self._firmware = NodeFirmware(
                host_end,
                self.node,
                ssid=self.config.ssid,
                password=self.config.password,
                port=port,
                device_name=self.config.device_name,
                clock=self.clock,
                static_root=self.config.app_dir,
            )
            try:
                self._firmware.boot()
            except GatewayError:
                self._modem.stop()
                raise
            self._control_port = self._modem.server_port
            thread = threading.Thread(
                target=self._firmware.run,
                args=(self._stop,),
                name="node-firmware",
                daemon=True,
            )
            thread.start()
            self._threads.append(thread)
        sampler = threading.Thread(
            target=self._sample_loop, name="sampler", daemon=True
        )
        sampler.start()
        self._threads.append(sampler)
        return self

    def _sample_loop(self) -> None:
        try:
            if self.config.fake_clock and isinstance(self.clock, FakeClock):
                self._replay_scenario()
                return
            while not self._stop.wait(min(SAMPLER_POLL_S, 0.5)):
                self._one_cycle()
        except GatewayConfigError as exc:
            log.error("sampler stopped: %s", exc)
            self.fatal = exc
            self._stop.set()

    def _one_cycle(self) -> bool:
        return push_cycle(
            self.node, self.scenario, self.telemetry, self.clock.now()
        )

    def _replay_scenario(self) -> None:
        """Fake-clock mode: walk the scenario once, one push per point,
        then leave the control plane running."""
        pushed = 0
        for point in self.scenario.points:
            if self._stop.is_set():
                return
            self.clock.advance_to(point.at)
            if self._one_cycle():
                pushed += 1
        log.info(
            "scenario replay complete: %d of %d points pushed",
            pushed,
            len(self.scenario),
        )

    def request_stop(self) -> None:
        """Signal-handler safe: ask the service to wind down."""
        self._stop.set()

    def stop(self) -> None:
        self._stop.set()
        # Tear the transports down first; their threads are blocked on them.
        if self._modem is not None:
            self._modem.stop()
        if self._plain is not None:
            self._plain.shutdown()
            self._plain.server_close()
        for thread in self._threads:
            thread.join(timeout=5.0)

    def wait(self, timeout: Optional[float] = None) -> bool:
        return self._stop.wait(timeout)

    def __enter__(self) -> "GatewayService":
        return self.start()

    def __exit__(self, *exc_info: object) -> None:
        self.stop()


def serve(config: GatewayConfig, *, clock=None) -> GatewayService:
    """Start a gateway; the CLI layers signal handling on top."""
    return GatewayService(config, clock=clock).start()
