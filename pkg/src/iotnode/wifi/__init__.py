"""ESP8266-style Wi-Fi link layer: AT command grammar, link state machine,
and the serial/TCP modem emulator."""

from .commands import AtCommand, AtParseError, AtVerb, parse_at, serialize_at
from .link import (
    DEFAULT_STATION_IP,
    MAX_SESSIONS,
    SEND_MAX_BYTES,
    AccessPoint,
    BootPins,
    LinkMode,
    LinkState,
    SessionError,
    at_step,
    close_session,
    hard_reset,
    open_session,
    wrap_ipd,
)

__all__ = [
    "AtCommand",
    "AtParseError",
    "AtVerb",
    "parse_at",
    "serialize_at",
    "DEFAULT_STATION_IP",
    "MAX_SESSIONS",
    "SEND_MAX_BYTES",
    "AccessPoint",
    "BootPins",
    "LinkMode",
    "LinkState",
    "SessionError",
    "at_step",
    "close_session",
    "hard_reset",
    "open_session",
    "wrap_ipd",
]
