"""Link state machine: join/server transitions, reset semantics, session
bookkeeping, and inbound data framing."""

from __future__ import annotations

import random

import pytest

from iotnode.wifi import (
    DEFAULT_STATION_IP,
    MAX_SESSIONS,
    SEND_MAX_BYTES,
    AccessPoint,
    AtCommand,
    AtVerb,
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

AT = AtCommand(AtVerb.AT)
RST = AtCommand(AtVerb.RST)
CWMODE1 = AtCommand(AtVerb.CWMODE, (1,))
JOIN = AtCommand(AtVerb.CWJAP, ("net", "pw"))
CIFSR = AtCommand(AtVerb.CIFSR)
MUX1 = AtCommand(AtVerb.CIPMUX, (1,))
SERVE = AtCommand(AtVerb.CIPSERVER, (1, 80))
UNSERVE = AtCommand(AtVerb.CIPSERVER, (0,))


def ready() -> LinkState:
    return LinkState.booted()


def joined() -> LinkState:
    state, lines = at_step(ready(), JOIN)
    assert lines[-1] == "OK"
    return state


def listening(with_session: int | None = None) -> LinkState:
    state, _ = at_step(joined(), MUX1)
    state, lines = at_step(state, SERVE)
    assert lines == ["OK"]
    if with_session is not None:
        state = open_session(state, with_session)
    return state


def test_boot_state_rejects_commands():
    state = LinkState()
    assert state.mode is LinkMode.BOOT
    after, lines = at_step(state, AT)
    assert after == state
    assert lines == ["ERROR"]


def test_flash_mode_is_silent():
    state = hard_reset(ready(), BootPins(rstb_low=True, gpio0_low=True))
    after, lines = at_step(state, AT)
    assert after == state
    assert lines == []


def test_ready_ping():
    after, lines = at_step(ready(), AT)
    assert after == ready()
    assert lines == ["OK"]


def test_join_flow_to_listening():
    state = ready()
    state, lines = at_step(state, CWMODE1)
    assert lines == ["OK"]
    state, lines = at_step(state, JOIN)
    assert lines == ["WIFI CONNECTED", "WIFI GOT IP", "OK"]
    assert state.mode is LinkMode.STA_JOINED
    assert state.ssid == "net"
    assert state.station_ip == DEFAULT_STATION_IP
    state, lines = at_step(state, MUX1)
    assert lines == ["OK"]
    state, lines = at_step(state, SERVE)
    assert lines == ["OK"]
    assert state.mode is LinkMode.SERVER_LISTENING
    assert state.listen_port == 80


def test_cifsr_reports_station_ip():
    _, lines = at_step(joined(), CIFSR)
    assert lines == ['+CIFSR:STAIP,"192.168.2.1"', "OK"]


def test_cifsr_before_join_fails():
    state, lines = at_step(ready(), CIFSR)
    assert lines == ["ERROR"]
    assert state == ready()


def test_custom_station_ip():
    state, _ = at_step(ready(), JOIN, station_ip="10.0.0.9")
    _, lines = at_step(state, CIFSR, station_ip="10.0.0.9")
    assert lines[0] == '+CIFSR:STAIP,"10.0.0.9"'


def test_server_requires_join():
    state, _ = at_step(ready(), MUX1)
    after, lines = at_step(state, SERVE)
    assert lines == ["ERROR"]
    assert after == state


def test_server_requires_mux():
    after, lines = at_step(joined(), SERVE)
    assert lines == ["ERROR"]
    assert after.mode is LinkMode.STA_JOINED


def test_join_checks_credentials_when_pinned():
    ap = AccessPoint("net", "pw")
    state, lines = at_step(ready(), AtCommand(AtVerb.CWJAP, ("net", "wrong")), ap=ap)
    assert lines == ["ERROR"]
    assert state.mode is LinkMode.READY
    state, lines = at_step(ready(), JOIN, ap=ap)
    assert lines[-1] == "OK"
    assert state.mode is LinkMode.STA_JOINED


def test_join_rejects_malformed_args():
    for args in ((), ("net",), (1, 2), ("", "pw"), ("net", "")):
        state, lines = at_step(ready(), AtCommand(AtVerb.CWJAP, args))
        assert lines == ["ERROR"]
        assert state == ready()


def test_cwmode_argument_validation():
    for arg in (1, 2, 3):
        _, lines = at_step(ready(), AtCommand(AtVerb.CWMODE, (arg,)))
        assert lines == ["OK"]
    for args in ((), (0,), (4,), ("1",)):
        _, lines = at_step(ready(), AtCommand(AtVerb.CWMODE, args))
        assert lines == ["ERROR"]


def test_mux_locked_while_serving():
    state = listening()
    after, lines = at_step(state, AtCommand(AtVerb.CIPMUX, (0,)))
    assert lines == ["ERROR"]
    assert after == state


def test_rst_returns_to_fresh_ready():
    state = listening(with_session=0)
    after, lines = at_step(state, RST)
    assert lines == ["OK", "ready"]
    assert after == LinkState.booted()
    assert after.open_sessions() == []


def test_server_delete_clears_sessions():
    state = listening(with_session=2)
    after, lines = at_step(state, UNSERVE)
    assert lines == ["OK"]
    assert after.mode is LinkMode.STA_JOINED
    assert after.sessions == {}
    assert after.listen_port is None
    # Station association survives.
    assert after.station_ip == DEFAULT_STATION_IP


def test_server_delete_requires_listening():
    state, lines = at_step(joined(), UNSERVE)
    assert lines == ["ERROR"]


def test_cipsend_validation():
    state = listening(with_session=1)
    ok_cases = [(1, 1), (1, 100), (1, SEND_MAX_BYTES)]
    for sid, length in ok_cases:
        after, lines = at_step(state, AtCommand(AtVerb.CIPSEND, (sid, length)))
        assert lines == ["OK"]
        assert after == state
    bad_cases = [
        (0, 10),  # session never opened
        (1, 0),  # empty send
        (1, SEND_MAX_BYTES + 1),
        (9, 10),  # no such slot
    ]
    for sid, length in bad_cases:
        after, lines = at_step(state, AtCommand(AtVerb.CIPSEND, (sid, length)))
        assert lines == ["ERROR"]
        assert after == state


def test_cipsend_requires_listening():
    _, lines = at_step(joined(), AtCommand(AtVerb.CIPSEND, (0, 10)))
    assert lines == ["ERROR"]


def test_cipclose_lifecycle():
    state = listening(with_session=3)
    after, lines = at_step(state, AtCommand(AtVerb.CIPCLOSE, (3,)))
    assert lines == ["3,CLOSED", "OK"]
    assert after.open_sessions() == []
    # Closing again fails.
    again, lines = at_step(after, AtCommand(AtVerb.CIPCLOSE, (3,)))
    assert lines == ["ERROR"]
    assert again == after


def test_hard_reset_table():
    state = listening(with_session=0)
    rebooted = hard_reset(state, BootPins(rstb_low=True, gpio0_low=False))
    assert rebooted.mode is LinkMode.READY
    assert rebooted.open_sessions() == []
    assert rebooted.station_ip is None

    flashed = hard_reset(state, BootPins(rstb_low=True, gpio0_low=True))
    assert flashed.mode is LinkMode.FLASH_MODE

    untouched = hard_reset(state, BootPins(rstb_low=False, gpio0_low=True))
    assert untouched == state


def test_open_session_bounds():
    state = listening()
    for sid in range(MAX_SESSIONS):
        state = open_session(state, sid)
    assert state.open_sessions() == list(range(MAX_SESSIONS))
    with pytest.raises(SessionError):
        open_session(state, MAX_SESSIONS)
    with pytest.raises(SessionError):
        open_session(state, 0)  # already open
    with pytest.raises(SessionError):
        open_session(joined(), 0)  # no server


def test_close_session_reopens_slot():
    state = listening(with_session=0)
    state = close_session(state, 0)
    assert state.open_sessions() == []
    state = open_session(state, 0)
    assert state.open_sessions() == [0]
    with pytest.raises(SessionError):
        close_session(listening(), 0)


def test_wrap_ipd_framing():
    state = listening(with_session=0)
    assert wrap_ipd(state, 0, b"hi") == b"+IPD,0,2:hi"
    assert wrap_ipd(state, 0, b"") == b"+IPD,0,0:"


def test_wrap_ipd_closed_session():
    state = listening(with_session=0)
    state = close_session(state, 0)
    with pytest.raises(SessionError):
        wrap_ipd(state, 3, b"x")
    with pytest.raises(SessionError):
        wrap_ipd(state, 0, b"x")


def test_wrap_ipd_length_field_matches_payload():
    state = listening(with_session=2)
    rng = random.Random(0x1BD)
    for _ in range(200):
        n = rng.randrange(0, SEND_MAX_BYTES + 1)
        payload = rng.randbytes(n)
        framed = wrap_ipd(state, 2, payload)
        header, _, rest = framed.partition(b":")
        assert header == b"+IPD,2,%d" % n
        assert rest == payload


def _command_pool() -> list[AtCommand]:
    return [
        AT,
        RST,
        CWMODE1,
        JOIN,
        AtCommand(AtVerb.CWJAP, ("net", "bad")),
        AtCommand(AtVerb.CWJAP, ("net",)),
        CIFSR,
        MUX1,
        AtCommand(AtVerb.CIPMUX, (0,)),
        SERVE,
        UNSERVE,
        AtCommand(AtVerb.CIPSEND, (0, 16)),
        AtCommand(AtVerb.CIPCLOSE, (0,)),
    ]


def test_random_walk_invariants():
    # Smaller cousin of the acceptance walk: structural invariants hold at
    # every reachable state, with network-side session events interleaved.
    rng = random.Random(0x5EED)
    pool = _command_pool()
    ap = AccessPoint("net", "pw")
    for _ in range(500):
        state = LinkState.booted()
        for _ in range(30):
            roll = rng.random()
            if roll < 0.15 and state.mode is LinkMode.SERVER_LISTENING:
                sid = rng.randrange(MAX_SESSIONS)
                try:
                    state = open_session(state, sid)
                except SessionError:
                    pass
            elif roll < 0.2 and state.open_sessions():
                state = close_session(state, rng.choice(state.open_sessions()))
            else:
                state, _ = at_step(state, rng.choice(pool), ap=ap)
            if state.sessions:
                assert state.mode is LinkMode.SERVER_LISTENING
            joined_modes = (LinkMode.STA_JOINED, LinkMode.SERVER_LISTENING)
            assert (state.station_ip is not None) == (state.mode in joined_modes)
            for sid in state.sessions:
                assert 0 <= sid < MAX_SESSIONS


def test_hard_reset_always_clears_sessions():
    rng = random.Random(0xB007)
    pool = _command_pool()
    for _ in range(300):
        state = LinkState.booted()
        for _ in range(20):
            if rng.random() < 0.2 and state.mode is LinkMode.SERVER_LISTENING:
                try:
                    state = open_session(state, rng.randrange(MAX_SESSIONS))
                except SessionError:
                    pass
            else:
                state, _ = at_step(state, rng.choice(pool))
        after = hard_reset(state, BootPins(rstb_low=True, gpio0_low=False))
        assert after.open_sessions() == []
        assert after.mode is LinkMode.READY


def test_determinism_same_log_same_responses():
    rng = random.Random(0xDE7)
    pool = _command_pool()
    log = [rng.choice(pool) for _ in range(200)]

    def run(log):
        state = LinkState.booted()
        out: list[str] = []
        for cmd in log:
            state, lines = at_step(state, cmd)
            out.extend(lines)
        return state, out

    first = run(log)
    second = run(log)
    assert first == second
