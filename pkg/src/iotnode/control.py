"""HTTP GET control surface for the node: pin writes, pin reads, sensor
snapshots, and a status document, in the style of embedded REST firmwares.

Path grammar:

    /digital/{pin}/{0|1}    set a digital output
    /analog/{pin}/{0..255}  set a PWM duty
    /digital/{pin}          read a digital pin
    /sensor                 latest temperature/humidity
    /                       full status document

`route` and `execute` are pure: the router turns a request line into a
`ControlAction`, and `execute` applies one action to a `DeviceState`
snapshot. The live path (`perform`) funnels the same actions through a
`DeviceNode` so every mutation lands in its op journal; `execute` doubles
as the replay oracle for that journal. `handle_http_request` wraps it all
for both transports (the emulated modem sessions and a plain TCP listener)
and can also serve the operator dashboard's static files under ``/app``.
"""

from __future__ import annotations

import json
import mimetypes
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Optional

from . import device
from .device import DeviceNode, DeviceState, SensorReading

CRLF = b"\r\n"

DUTY_MIN = 0
DIGITAL_LOW = 0
DIGITAL_HIGH = 1


class ActionKind(Enum):
    DIGITAL_WRITE = "digital-write"
    ANALOG_WRITE = "analog-write"
    DIGITAL_READ = "digital-read"
    SENSOR_READ = "sensor-read"
    STATUS = "status"


class ControlError(Exception):
    """Base for errors that map to an HTTP status."""

    status = 400

    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class NotFoundError(ControlError):
    status = 404


class BadValueError(ControlError):
    status = 400


class MethodNotAllowedError(ControlError):
    status = 405


class DeviceRejectionError(ControlError):
    """The device refused a routed action (unknown pin, no reading yet)."""

    status = 400


@dataclass(frozen=True)
class ControlAction:
    kind: ActionKind
    pin: Optional[int] = None
    value: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind is ActionKind.DIGITAL_WRITE:
            if self.value not in (DIGITAL_LOW, DIGITAL_HIGH):
                raise ValueError(f"digital value must be 0 or 1, got {self.value!r}")
        elif self.kind is ActionKind.ANALOG_WRITE:
            if (
                not isinstance(self.value, int)
                or not DUTY_MIN <= self.value <= device.DUTY_MAX
            ):
                raise ValueError(
                    f"duty must be {DUTY_MIN}..{device.DUTY_MAX}, got {self.value!r}"
                )


_STATUS_TEXT = {
    200: "OK",
    400: "Bad Request",
    404: "Not Found",
    405: "Method Not Allowed",
    500: "Internal Server Error",
}


def route(request_line: str) -> ControlAction:
    """Map an HTTP request line onto a ControlAction.

    Unknown paths raise `NotFoundError`; paths of the right shape with an
    out-of-range value segment raise `BadValueError`; non-GET methods raise
    `MethodNotAllowedError`.
    """
    parts = request_line.strip().split(" ")
    if len(parts) != 3 or not parts[2].startswith("HTTP/"):
        raise BadValueError(f"malformed request line: {request_line!r}")
    method, path, _version = parts
    if method != "GET":
        raise MethodNotAllowedError(f"method {method} not allowed")
    if path == "/":
        return ControlAction(ActionKind.STATUS)
    if path == "/sensor":
        return ControlAction(ActionKind.SENSOR_READ)

    segments = path.split("/")
    # Leading '' from the leading slash; no trailing slashes in the grammar.
    if len(segments) >= 2 and segments[0] == "":
        if segments[1] == "digital" and len(segments) == 3:
            return ControlAction(ActionKind.DIGITAL_READ, pin=_pin(segments[2]))
        if segments[1] == "digital" and len(segments) == 4:
            pin = _pin(segments[2])
            value = _int_segment(segments[3])
            if value not in (DIGITAL_LOW, DIGITAL_HIGH):
                raise BadValueError(f"digital value must be 0 or 1, got {value}")
            return ControlAction(ActionKind.DIGITAL_WRITE, pin=pin, value=value)
        if segments[1] == "analog" and len(segments) == 4:
            pin = _pin(segments[2])
            value = _int_segment(segments[3])
            if not DUTY_MIN <= value <= device.DUTY_MAX:
                raise BadValueError(
                    f"duty must be {DUTY_MIN}..{device.DUTY_MAX}, got {value}"
                )
            return ControlAction(ActionKind.ANALOG_WRITE, pin=pin, value=value)
    raise NotFoundError(f"no route for {path}")


def _pin(segment: str) -> int:
    if not segment.isdigit():
        raise NotFoundError(f"pin segment {segment!r} is not a number")
    return int(segment)


def _int_segment(segment: str) -> int:
    if not segment.isdigit():
        raise NotFoundError(f"value segment {segment!r} is not a number")
    return int(segment)


def serialize_action(action: ControlAction) -> str:
    """Inverse of `route`, producing the canonical path for an action."""
    kind = action.kind
    if kind is ActionKind.STATUS:
        return "/"
    if kind is ActionKind.SENSOR_READ:
        return "/sensor"
    if kind is ActionKind.DIGITAL_READ:
        return f"/digital/{action.pin}"
    if kind is ActionKind.DIGITAL_WRITE:
        return f"/digital/{action.pin}/{action.value}"
    if kind is ActionKind.ANALOG_WRITE:
        return f"/analog/{action.pin}/{action.value}"
    raise ValueError(f"unknown action kind {kind!r}")


def _envelope(state: DeviceState, device_name: str) -> dict:
    return {"id": state.device_id, "name": device_name, "connected": True}


def _sensor_doc(reading: SensorReading) -> dict:
    return {
        "temperature": reading.temperature_c,
        "humidity": reading.humidity_pct,
    }


def execute(
    action: ControlAction,
    state: DeviceState,
    *,
    reading: Optional[SensorReading] = None,
    device_name: str = "node",
) -> tuple[DeviceState, dict]:
    """Apply one action to a state snapshot.

    Pure: returns the successor state and the response document. Device
    refusals (unknown pin, missing reading) raise `DeviceRejectionError`.
    """
    doc = _envelope(state, device_name)
    try:
        if action.kind is ActionKind.DIGITAL_WRITE:
            state = device.apply_digital(state, action.pin, action.value)
            doc["value"] = action.value
        elif action.kind is ActionKind.ANALOG_WRITE:
            state = device.apply_pwm(state, action.pin, action.value)
            doc["value"] = action.value
        elif action.kind is ActionKind.DIGITAL_READ:
            if action.pin not in state.digital_pins:
                raise device.UnknownPinError(f"no digital pin {action.pin}")
            doc["value"] = state.digital_pins[action.pin]
        elif action.kind is ActionKind.SENSOR_READ:
            if reading is None:
                raise DeviceRejectionError("no sensor reading available")
            doc.update(_sensor_doc(reading))
        elif action.kind is ActionKind.STATUS:
            doc["digital"] = {str(p): v for p, v in sorted(state.digital_pins.items())}
            doc["pwm"] = {str(p): v for p, v in sorted(state.pwm_channels.items())}
            if reading is not None:
                doc["sensor"] = _sensor_doc(reading)
        else:
            raise ValueError(f"unknown action kind {action.kind!r}")
    except device.DeviceError as exc:
        raise DeviceRejectionError(str(exc)) from exc
    return state, doc


def perform(
    node: DeviceNode,
    action: ControlAction,
    *,
    device_name: str = "node",
    now: Optional[datetime] = None,
) -> dict:
    """Run one action against the live node.

    Writes and reads go through the node's journaled operations so the
    serialized history can be replayed through `execute` afterwards.
    """
    try:
        if action.kind is ActionKind.DIGITAL_WRITE:
            value = node.digital_write(action.pin, action.value)
            doc = _envelope(node.snapshot(), device_name)
            doc["value"] = value
            return doc
        if action.kind is ActionKind.ANALOG_WRITE:
            value = node.analog_write(action.pin, action.value)
            doc = _envelope(node.snapshot(), device_name)
            doc["value"] = value
            return doc
        if action.kind is ActionKind.DIGITAL_READ:
            value = node.digital_read(action.pin)
            doc = _envelope(node.snapshot(), device_name)
            doc["value"] = value
            return doc
        if action.kind is ActionKind.SENSOR_READ:
            reading = None
            if now is not None and node.scenario is not None:
                try:
                    reading = node.read_sensor(now)
                except device.NoScenarioDataError:
                    reading = None
            if reading is None:
                # No scenario data at this instant: serve the last reading
                # the sampler captured.
                reading = node.last_reading()
            if reading is None:
                raise DeviceRejectionError("no sensor reading available")
            doc = _envelope(node.snapshot(), device_name)
            doc.update(_sensor_doc(reading))
            return doc
        if action.kind is ActionKind.STATUS:
            state = node.snapshot()
            _, doc = execute(
                action, state, reading=node.last_reading(), device_name=device_name
            )
            return doc
    except device.DeviceError as exc:
        raise DeviceRejectionError(str(exc)) from exc
    raise ValueError(f"unknown action kind {action.kind!r}")


def render_response(
    doc: dict,
    status: int = 200,
    *,
    content_type: str = "application/json",
) -> bytes:
    body = json.dumps(doc).encode("utf-8")
    return render_raw(body, status, content_type=content_type)


def render_raw(body: bytes, status: int, *, content_type: str) -> bytes:
    text = _STATUS_TEXT.get(status, "Error")
    head = (
        f"HTTP/1.1 {status} {text}\r\n"
        f"Content-Type: {content_type}\r\n"
        f"Content-Length: {len(body)}\r\n"
        "Access-Control-Allow-Origin: *\r\n"
        "Connection: close\r\n"
        "\r\n"
    )
    return head.encode("ascii") + body


def render_error(exc: ControlError) -> bytes:
    return render_response({"error": exc.reason}, exc.status)


APP_PREFIX = "/app"


def _serve_static(path: str, static_root: Path) -> bytes:
    rel = path[len(APP_PREFIX) :].lstrip("/") or "index.html"
    root = static_root.resolve()
    target = (root / rel).resolve()
    if root != target and root not in target.parents:
        return render_error(NotFoundError("path escapes the app root"))
    if target.is_dir():
        target = target / "index.html"
    if not target.is_file():
        return render_error(NotFoundError(f"no such file under {APP_PREFIX}"))
    ctype, _ = mimetypes.guess_type(target.name)
    return render_raw(
        target.read_bytes(), 200, content_type=ctype or "application/octet-stream"
    )


def handle_http_request(
    raw: bytes,
    node: DeviceNode,
    *,
    device_name: str = "node",
    now: Optional[datetime] = None,
    static_root: Optional[Path] = None,
) -> bytes:
    """Turn one complete HTTP request into one complete HTTP response.

    Shared by the modem-session bridge and the plain TCP listener. Headers
    beyond the request line are ignored; the grammar is GET-only.
    """
    head, _, _ = raw.partition(CRLF)
    try:
        request_line = head.decode("ascii")
    except UnicodeDecodeError:
        return render_error(BadValueError("request line is not ASCII"))
    if static_root is not None:
        parts = request_line.strip().split(" ")
        if len(parts) == 3 and parts[0] == "GET":
            path = parts[1]
            if path == APP_PREFIX or path.startswith(APP_PREFIX + "/"):
                return _serve_static(path, static_root)
    try:
        action = route(request_line)
        doc = perform(node, action, device_name=device_name, now=now)
    except ControlError as exc:
        return render_error(exc)
    return render_response(doc)
