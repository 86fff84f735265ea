"""Deterministic link state machine for the emulated Wi-Fi module.

`at_step` is a pure transition function: same state + same command always
yields the same successor state and the same response lines. Command
failures never change state; they surface as an ``ERROR`` response line,
mirroring the modem convention. Network-side session events (a TCP peer
connecting or hanging up) go through `open_session` / `close_session`,
driven by the modem wrapper rather than by AT commands.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .commands import AtCommand, AtVerb

#: First (and, for this single-station module, only) address the emulated
#: DHCP pool hands out. Reproduces the demonstrator's serial-monitor output.
DEFAULT_STATION_IP = "192.168.2.1"
#: Multi-connection session ids are 0..MAX_SESSIONS-1.
MAX_SESSIONS = 5
#: Per-send payload cap, matching the modem family convention.
SEND_MAX_BYTES = 2048

OK = "OK"
ERROR = "ERROR"
READY_BANNER = "ready"


class LinkMode(Enum):
    BOOT = "BOOT"
    FLASH_MODE = "FLASH_MODE"
    READY = "READY"
    STA_JOINED = "STA_JOINED"
    SERVER_LISTENING = "SERVER_LISTENING"


class SessionError(Exception):
    pass


@dataclass(frozen=True)
class BootPins:
    """Reset/boot strap lines: RSTB pulled low triggers a reset, and GPIO0
    held low during that reset drops the module into FLASH mode."""

    rstb_low: bool
    gpio0_low: bool


@dataclass(frozen=True)
class AccessPoint:
    """Credentials the emulated environment will accept for a join."""

    ssid: str
    password: str


@dataclass(frozen=True)
class LinkState:
    mode: LinkMode = LinkMode.BOOT
    ssid: Optional[str] = None
    station_ip: Optional[str] = None
    mux: bool = False
    sessions: dict[int, bool] = field(default_factory=dict)
    listen_port: Optional[int] = None

    @classmethod
    def booted(cls) -> "LinkState":
        """State right after the boot banner: command interpreter live."""
        return cls(mode=LinkMode.READY)

    def open_sessions(self) -> list[int]:
        return sorted(sid for sid, is_open in self.sessions.items() if is_open)


def _fresh_ready() -> LinkState:
    return LinkState.booted()


def _fail(state: LinkState) -> tuple[LinkState, list[str]]:
    return state, [ERROR]


def at_step(
    state: LinkState,
    cmd: AtCommand,
    *,
    station_ip: str = DEFAULT_STATION_IP,
    ap: Optional[AccessPoint] = None,
) -> tuple[LinkState, list[str]]:
    """One deterministic step of the command interpreter.

    ``station_ip`` is the address the emulated DHCP pool would assign on a
    successful join; ``ap`` optionally pins the credentials that joins must
    match (None accepts any non-empty pair).
    """
    if state.mode is LinkMode.FLASH_MODE:
        # Bootloader: the AT interpreter is not running.
        return state, []
    if state.mode is LinkMode.BOOT:
        return _fail(state)

    verb = cmd.verb
    if verb is AtVerb.AT:
        return state, [OK]
    if verb is AtVerb.RST:
        return _fresh_ready(), [OK, READY_BANNER]
    if verb is AtVerb.CWMODE:
        if len(cmd.args) == 1 and cmd.args[0] in (1, 2, 3):
            return state, [OK]
        return _fail(state)
    if verb is AtVerb.CWJAP:
        return _step_cwjap(state, cmd, station_ip, ap)
    if verb is AtVerb.CIFSR:
        if cmd.args or state.station_ip is None:
            return _fail(state)
        return state, [f'+CIFSR:STAIP,"{state.station_ip}"', OK]
    if verb is AtVerb.CIPMUX:
        return _step_cipmux(state, cmd)
    if verb is AtVerb.CIPSERVER:
        return _step_cipserver(state, cmd)
    if verb is AtVerb.CIPSEND:
        return _step_cipsend(state, cmd)
    if verb is AtVerb.CIPCLOSE:
        return _step_cipclose(state, cmd)
    return _fail(state)


def _step_cwjap(
    state: LinkState,
    cmd: AtCommand,
    station_ip: str,
    ap: Optional[AccessPoint],
) -> tuple[LinkState, list[str]]:
    if state.mode not in (LinkMode.READY, LinkMode.STA_JOINED):
        return _fail(state)
    if len(cmd.args) != 2 or not all(isinstance(a, str) for a in cmd.args):
        return _fail(state)
    ssid, password = cmd.args
    if not ssid or not password:
        return _fail(state)
    if ap is not None and (ssid != ap.ssid or password != ap.password):
        return _fail(state)
    joined = replace(
        state,
        mode=LinkMode.STA_JOINED,
        ssid=ssid,
        station_ip=station_ip,
    )
    return joined, ["WIFI CONNECTED", "WIFI GOT IP", OK]


def _step_cipmux(state: LinkState, cmd: AtCommand) -> tuple[LinkState, list[str]]:
    if state.mode not in (LinkMode.READY, LinkMode.STA_JOINED):
        # Cannot flip multiplexing under a live server.
        return _fail(state)
    if len(cmd.args) != 1 or cmd.args[0] not in (0, 1):
        return _fail(state)
    return replace(state, mux=bool(cmd.args[0])), [OK]


def _step_cipserver(state: LinkState, cmd: AtCommand) -> tuple[LinkState, list[str]]:
    if not cmd.args or cmd.args[0] not in (0, 1):
        return _fail(state)
    if cmd.args[0] == 1:
        if len(cmd.args) != 2 or not isinstance(cmd.args[1], int):
            return _fail(state)
        port = cmd.args[1]
        # 0 asks the host stack for an ephemeral port.
        if not 0 <= port <= 65535:
            return _fail(state)
        if state.mode is not LinkMode.STA_JOINED or not state.mux:
            return _fail(state)
        return replace(state, mode=LinkMode.SERVER_LISTENING, listen_port=port), [OK]
    # Delete server
    if len(cmd.args) > 1 or state.mode is not LinkMode.SERVER_LISTENING:
        return _fail(state)
    return (
        replace(state, mode=LinkMode.STA_JOINED, listen_port=None, sessions={}),
        [OK],
    )


def _step_cipsend(state: LinkState, cmd: AtCommand) -> tuple[LinkState, list[str]]:
    if state.mode is not LinkMode.SERVER_LISTENING or not state.mux:
        return _fail(state)
    if len(cmd.args) != 2 or not all(isinstance(a, int) for a in cmd.args):
        return _fail(state)
    sid, length = cmd.args
    if not state.sessions.get(sid, False):
        return _fail(state)
    if not 1 <= length <= SEND_MAX_BYTES:
        return _fail(state)
    return state, [OK]


def _step_cipclose(state: LinkState, cmd: AtCommand) -> tuple[LinkState, list[str]]:
    if state.mode is not LinkMode.SERVER_LISTENING:
        return _fail(state)
    if len(cmd.args) != 1 or not isinstance(cmd.args[0], int):
        return _fail(state)
    sid = cmd.args[0]
    if not state.sessions.get(sid, False):
        return _fail(state)
    sessions = dict(state.sessions)
    sessions[sid] = False
    return replace(state, sessions=sessions), [f"{sid},CLOSED", OK]


def hard_reset(state: LinkState, pins: BootPins) -> LinkState:
    """Reset via the strap pins.

    RSTB must be low for anything to happen. GPIO0 low at reset lands in
    FLASH mode; otherwise the module reboots to READY with every session
    closed and all join/server state cleared.
    """
    if not pins.rstb_low:
        return state
    if pins.gpio0_low:
        return LinkState(mode=LinkMode.FLASH_MODE)
    return _fresh_ready()


def open_session(state: LinkState, sid: int) -> LinkState:
    """Register an inbound TCP peer on a free session slot."""
    if state.mode is not LinkMode.SERVER_LISTENING:
        raise SessionError("no server listening")
    if not 0 <= sid < MAX_SESSIONS:
        raise SessionError(f"session id {sid} outside 0..{MAX_SESSIONS - 1}")
    if state.sessions.get(sid, False):
        raise SessionError(f"session {sid} already open")
    sessions = dict(state.sessions)
    sessions[sid] = True
    return replace(state, sessions=sessions)


def close_session(state: LinkState, sid: int) -> LinkState:
    if not state.sessions.get(sid, False):
        raise SessionError(f"session {sid} is not open")
    sessions = dict(state.sessions)
    sessions[sid] = False
    return replace(state, sessions=sessions)


def wrap_ipd(state: LinkState, sid: int, payload: bytes) -> bytes:
    """Frame inbound session bytes for the host: ``+IPD,<sid>,<len>:<payload>``."""
    if not state.sessions.get(sid, False):
        raise SessionError(f"session {sid} is not open")
    return b"+IPD,%d,%d:" % (sid, len(payload)) + payload
