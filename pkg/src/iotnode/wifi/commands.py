"""Line-oriented modem command grammar: ``AT[+VERB[=args]]`` CR LF.

Arguments are comma-separated; strings are double-quoted with ``\\"`` and
``\\\\`` escapes, numbers are bare decimal. `parse_at` and `serialize_at`
are exact inverses over the grammar.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

CRLF = b"\r\n"


class AtVerb(Enum):
    AT = "AT"
    RST = "RST"
    CWMODE = "CWMODE"
    CWJAP = "CWJAP"
    CIFSR = "CIFSR"
    CIPMUX = "CIPMUX"
    CIPSERVER = "CIPSERVER"
    CIPSEND = "CIPSEND"
    CIPCLOSE = "CIPCLOSE"


_VERBS = {verb.value: verb for verb in AtVerb}

AtArg = Union[int, str]


class AtParseError(Exception):
    """Carries the byte offset of the first illegal character."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset


@dataclass(frozen=True)
class AtCommand:
    verb: AtVerb
    args: tuple[AtArg, ...] = ()


def parse_at(line: bytes) -> AtCommand:
    """Parse one CR LF terminated command line."""
    if not line.endswith(CRLF):
        raise AtParseError(len(line), "line must end with CR LF")
    body = line[:-2]
    try:
        text = body.decode("ascii")
    except UnicodeDecodeError as exc:
        raise AtParseError(exc.start, "non-ASCII byte") from None

    if not text.startswith("AT"):
        offset = 0 if not text.startswith("A") else 1
        raise AtParseError(offset, "command must start with AT")
    if text == "AT":
        return AtCommand(AtVerb.AT)
    if text[2] != "+":
        raise AtParseError(2, "expected '+' after AT")

    pos = 3
    start = pos
    while pos < len(text) and (text[pos].isupper() or text[pos].isdigit()):
        pos += 1
    name = text[start:pos]
    verb = _VERBS.get(name)
    if verb is None or verb is AtVerb.AT:
        raise AtParseError(start, f"unknown verb {name!r}")

    if pos == len(text):
        return AtCommand(verb)
    if text[pos] != "=":
        raise AtParseError(pos, "expected '=' before arguments")
    pos += 1

    args: list[AtArg] = []
    while True:
        if pos >= len(text):
            raise AtParseError(pos, "missing argument")
        ch = text[pos]
        if ch == '"':
            value, pos = _parse_quoted(text, pos)
            args.append(value)
        else:
            value, pos = _parse_number(text, pos)
            args.append(value)
        if pos == len(text):
            return AtCommand(verb, tuple(args))
        if text[pos] != ",":
            raise AtParseError(pos, "expected ',' between arguments")
        pos += 1


def _parse_quoted(text: str, pos: int) -> tuple[str, int]:
    # pos is at the opening quote
    pos += 1
    out: list[str] = []
    while pos < len(text):
        ch = text[pos]
        if ch == "\\":
            if pos + 1 >= len(text):
                raise AtParseError(pos, "dangling escape")
            nxt = text[pos + 1]
            if nxt not in ('"', "\\"):
                raise AtParseError(pos + 1, f"unsupported escape {nxt!r}")
            out.append(nxt)
            pos += 2
        elif ch == '"':
            return "".join(out), pos + 1
        else:
            out.append(ch)
            pos += 1
    raise AtParseError(len(text), "unterminated string")


def _parse_number(text: str, pos: int) -> tuple[int, int]:
    start = pos
    while pos < len(text) and text[pos].isdigit():
        pos += 1
    if pos == start:
        raise AtParseError(start, "expected number or quoted string")
    return int(text[start:pos]), pos


def serialize_at(cmd: AtCommand) -> bytes:
    """Render a command back to its CR LF wire form."""
    if cmd.verb is AtVerb.AT:
        if cmd.args:
            raise ValueError("bare AT takes no arguments")
        return b"AT" + CRLF
    parts = [f"AT+{cmd.verb.value}"]
    if cmd.args:
        rendered = []
        for arg in cmd.args:
            if isinstance(arg, bool):
                raise TypeError("bool is not a valid argument")
            if isinstance(arg, int):
                if arg < 0:
                    raise ValueError("negative numeric argument")
                rendered.append(str(arg))
            elif isinstance(arg, str):
                escaped = arg.replace("\\", "\\\\").replace('"', '\\"')
                rendered.append(f'"{escaped}"')
            else:
                raise TypeError(f"unsupported argument type {type(arg).__name__}")
        parts.append("=" + ",".join(rendered))
    return "".join(parts).encode("ascii") + CRLF
