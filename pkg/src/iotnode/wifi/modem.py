"""Threaded modem emulator: an AT command interpreter behind an in-memory
serial port, backed by a real TCP listener.

The pure state machine lives in `link`; this module adds the messy parts a
host actually talks to:

* a byte-stream "UART" (`serial_pair`) with blocking reads and timeouts,
* a command thread that parses `AT...` lines and answers on the serial line,
* a TCP accept loop mapping OS connections onto session ids 0..4, blocking
  for a free slot when all five are busy,
* per-session reader threads that funnel inbound bytes to the host as
  `+IPD,<sid>,<len>:<payload>` frames,
* the CIPSEND data phase (`> ` prompt, raw payload, `SEND OK`/`SEND FAIL`).

Every modem-to-host write is one atomic unit (a full line group or a full
frame) under a single tx lock, so the host never sees torn output, though
unsolicited frames may appear between a command and its response.
"""

from __future__ import annotations

import socket
import threading
import time
from typing import Optional

from .commands import CRLF, AtParseError, AtVerb, parse_at
from .link import (
    ERROR,
    OK,
    READY_BANNER,
    DEFAULT_STATION_IP,
    MAX_SESSIONS,
    AccessPoint,
    LinkMode,
    LinkState,
    at_step,
    close_session,
    open_session,
    wrap_ipd,
)

PROMPT = b"> "
SEND_OK = "SEND OK"
SEND_FAIL = "SEND FAIL"


def _shutdown_close(sock: socket.socket) -> None:
    # shutdown first: close() alone leaves the fd pinned by any thread
    # still blocked in recv/accept, so the FIN would never be sent.
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    try:
        sock.close()
    except OSError:
        pass

#: How long the data phase waits for the host to supply the promised bytes.
DATA_PHASE_TIMEOUT_S = 5.0


class StreamClosed(Exception):
    """The other end hung up and the buffer has drained."""


class ByteStream:
    """One direction of the emulated UART: thread-safe, blocking, closable."""

    def __init__(self) -> None:
        self._buf = bytearray()
        self._cond = threading.Condition()
        self._closed = False

    def write(self, data: bytes) -> None:
        if not data:
            return
        with self._cond:
            if self._closed:
                raise StreamClosed("write to closed stream")
            self._buf.extend(data)
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def _wait(self, deadline: Optional[float]) -> None:
        if deadline is None:
            self._cond.wait()
            return
        remaining = deadline - time.monotonic()
        if remaining <= 0 or not self._cond.wait(remaining):
            raise TimeoutError("serial read timed out")

    def read_exact(self, n: int, timeout: Optional[float] = None) -> bytes:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while len(self._buf) < n:
                if self._closed:
                    raise StreamClosed("stream closed before enough data")
                self._wait(deadline)
            data = bytes(self._buf[:n])
            del self._buf[:n]
            return data

    def read_until(self, delim: bytes, timeout: Optional[float] = None) -> bytes:
        """Read up to and including ``delim``."""
        if not delim:
            raise ValueError("empty delimiter")
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while True:
                idx = self._buf.find(delim)
                if idx >= 0:
                    end = idx + len(delim)
                    data = bytes(self._buf[:end])
                    del self._buf[:end]
                    return data
                if self._closed:
                    raise StreamClosed("stream closed before delimiter")
                self._wait(deadline)


class SerialEndpoint:
    """One end of the UART pair: write to tx, read from rx."""

    def __init__(self, rx: ByteStream, tx: ByteStream) -> None:
        self._rx = rx
        self._tx = tx

    def write(self, data: bytes) -> None:
        self._tx.write(data)

    def read_exact(self, n: int, timeout: Optional[float] = None) -> bytes:
        return self._rx.read_exact(n, timeout)

    def read_until(self, delim: bytes, timeout: Optional[float] = None) -> bytes:
        return self._rx.read_until(delim, timeout)

    def read_line(self, timeout: Optional[float] = None) -> bytes:
        """Read one CR LF terminated line, terminator included."""
        return self._rx.read_until(CRLF, timeout)

    def close(self) -> None:
        self._rx.close()
        self._tx.close()


def serial_pair() -> tuple[SerialEndpoint, SerialEndpoint]:
    """Create a connected (host_end, modem_end) UART pair."""
    a = ByteStream()
    b = ByteStream()
    return SerialEndpoint(rx=a, tx=b), SerialEndpoint(rx=b, tx=a)


class AtModem:
    """The emulated Wi-Fi module. Owns its side of the serial pair and, once
    a server is started, a real TCP listener on ``bind_host``.

    The accept loop blocks while all session slots are busy, so any number
    of OS-level clients can queue against the five-slot cap.
    """

    def __init__(
        self,
        serial: SerialEndpoint,
        *,
        station_ip: str = DEFAULT_STATION_IP,
        ap: Optional[AccessPoint] = None,
        bind_host: str = "127.0.0.1",
        data_timeout: float = DATA_PHASE_TIMEOUT_S,
    ) -> None:
        self._serial = serial
        self._station_ip = station_ip
        self._ap = ap
        self._bind_host = bind_host
        self._data_timeout = data_timeout

        self._lock = threading.Lock()
        self._slot_free = threading.Condition(self._lock)
        self._state = LinkState()
        self._conns: dict[int, socket.socket] = {}
        self._listener: Optional[socket.socket] = None
        self._bound_port: Optional[int] = None

        self._tx_lock = threading.Lock()
        self._running = False
        self._cmd_thread: Optional[threading.Thread] = None
        self._accept_thread: Optional[threading.Thread] = None

    # -- inspection ------------------------------------------------------

    @property
    def state(self) -> LinkState:
        with self._lock:
            return self._state

    @property
    def server_port(self) -> Optional[int]:
        """Actual bound TCP port, once listening (resolves port 0)."""
        with self._lock:
            return self._bound_port

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        """Power on: boot banner, then the command interpreter goes live."""
        with self._lock:
            if self._running:
                return
            self._running = True
            self._state = LinkState.booted()
        self._send_lines([READY_BANNER])
        self._cmd_thread = threading.Thread(
            target=self._command_loop, name="at-modem-cmd", daemon=True
        )
        self._cmd_thread.start()

    def stop(self) -> None:
        with self._lock:
            if not self._running:
                return
            self._running = False
            self._slot_free.notify_all()
        self._teardown_network()
        self._serial.close()
        if self._cmd_thread is not None:
            self._cmd_thread.join(timeout=2.0)
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2.0)

    def __enter__(self) -> "AtModem":
        self.start()
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.stop()

    # -- serial tx -------------------------------------------------------

    def _send_lines(self, lines: list[str]) -> None:
        payload = b"".join(line.encode("ascii") + CRLF for line in lines)
        self._send_raw(payload)

    def _send_raw(self, data: bytes) -> None:
        with self._tx_lock:
            try:
                self._serial.write(data)
            except StreamClosed:
                pass

    # -- command interpreter ---------------------------------------------

    def _command_loop(self) -> None:
        while self._running:
            try:
                line = self._serial.read_line(timeout=0.2)
            except TimeoutError:
                continue
            except StreamClosed:
                return
            self._handle_line(line)

    def _handle_line(self, line: bytes) -> None:
        if line == CRLF:
            return
        try:
            cmd = parse_at(line)
        except AtParseError:
            self._send_lines([ERROR])
            return
        if cmd.verb is AtVerb.RST:
            self._handle_rst()
        elif cmd.verb is AtVerb.CIPSERVER:
            self._handle_cipserver(cmd)
        elif cmd.verb is AtVerb.CIPSEND:
            self._handle_cipsend(cmd)
        elif cmd.verb is AtVerb.CIPCLOSE:
            self._handle_cipclose(cmd)
        else:
            with self._lock:
                self._state, lines = self._step(cmd)
            self._send_lines(lines)

    def _step(self, cmd) -> tuple[LinkState, list[str]]:
        return at_step(
            self._state, cmd, station_ip=self._station_ip, ap=self._ap
        )

    def _handle_rst(self) -> None:
        self._teardown_network()
        with self._lock:
            self._state = LinkState.booted()
        self._send_lines([OK, READY_BANNER])

    def _handle_cipserver(self, cmd) -> None:
        with self._lock:
            new_state, lines = self._step(cmd)
            if lines[-1] == ERROR:
                self._send_lines([ERROR])
                return
            if cmd.args[0] == 1:
                try:
                    listener = socket.create_server(
                        (self._bind_host, new_state.listen_port), backlog=64
                    )
                except OSError:
                    # Bind refused: report failure, keep the old state.
                    self._send_lines([ERROR])
                    return
                self._listener = listener
                self._bound_port = listener.getsockname()[1]
                self._state = new_state
                self._accept_thread = threading.Thread(
                    target=self._accept_loop,
                    args=(listener,),
                    name="at-modem-accept",
                    daemon=True,
                )
                self._accept_thread.start()
                self._send_lines(lines)
                return
        # Server delete: tear down outside the state lock.
        self._teardown_network()
        with self._lock:
            self._state = new_state
        self._send_lines(lines)

    def _handle_cipsend(self, cmd) -> None:
        with self._lock:
            _, lines = self._step(cmd)
        if lines[-1] == ERROR:
            self._send_lines([ERROR])
            return
        sid, length = cmd.args
        self._send_lines([OK])
        self._send_raw(PROMPT)
        try:
            payload = self._serial.read_exact(length, timeout=self._data_timeout)
        except TimeoutError:
            self._send_lines([SEND_FAIL])
            return
        except StreamClosed:
            return
        # The peer may have vanished between the prompt and the payload;
        # resolve the socket at send time.
        with self._lock:
            conn = self._conns.get(sid) if self._state.sessions.get(sid) else None
        sent = False
        if conn is not None:
            try:
                conn.sendall(payload)
                sent = True
            except OSError:
                sent = False
        self._send_lines([SEND_OK if sent else SEND_FAIL])

    def _handle_cipclose(self, cmd) -> None:
        conn = None
        with self._lock:
            new_state, lines = self._step(cmd)
            if lines[-1] != ERROR:
                self._state = new_state
                conn = self._conns.pop(cmd.args[0], None)
                self._slot_free.notify_all()
        self._send_lines(lines)
        if conn is not None:
            _shutdown_close(conn)

    # -- TCP side --------------------------------------------------------

    def _free_sid(self) -> Optional[int]:
        for sid in range(MAX_SESSIONS):
            if not self._state.sessions.get(sid, False) and sid not in self._conns:
                return sid
        return None

    def _accept_loop(self, listener: socket.socket) -> None:
        while True:
            with self._lock:
                while (
                    self._running
                    and self._listener is listener
                    and self._free_sid() is None
                ):
                    self._slot_free.wait(timeout=0.2)
                if not self._running or self._listener is not listener:
                    return
            try:
                conn, _addr = listener.accept()
            except OSError:
                return
            with self._lock:
                sid = self._free_sid()
                if (
                    sid is None
                    or not self._running
                    or self._listener is not listener
                    or self._state.mode is not LinkMode.SERVER_LISTENING
                ):
                    _shutdown_close(conn)
                    continue
                self._state = open_session(self._state, sid)
                self._conns[sid] = conn
            self._send_lines([f"{sid},CONNECT"])
            threading.Thread(
                target=self._session_reader,
                args=(sid, conn),
                name=f"at-modem-session-{sid}",
                daemon=True,
            ).start()

    def _session_reader(self, sid: int, conn: socket.socket) -> None:
        while True:
            try:
                data = conn.recv(2048)
            except OSError:
                data = b""
            if not data:
                break
            with self._lock:
                if self._conns.get(sid) is not conn:
                    return
                frame = wrap_ipd(self._state, sid, data)
            self._send_raw(frame)
        # Peer hung up, unless the host already closed this session.
        with self._lock:
            if self._conns.get(sid) is not conn:
                return
            self._conns.pop(sid)
            if self._state.sessions.get(sid, False):
                self._state = close_session(self._state, sid)
            self._slot_free.notify_all()
        self._send_lines([f"{sid},CLOSED"])
        _shutdown_close(conn)

    def _teardown_network(self) -> None:
        """Close the listener and every session socket. Callers decide what
        happens to the link state afterwards."""
        with self._lock:
            listener, self._listener = self._listener, None
            self._bound_port = None
            conns = list(self._conns.values())
            self._conns.clear()
            self._slot_free.notify_all()
        if listener is not None:
            _shutdown_close(listener)
        for conn in conns:
            _shutdown_close(conn)
