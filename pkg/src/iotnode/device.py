"""Emulated sensor/actuator node: GPIO registers, LED duty channels, and a
replayable environment scenario feeding the temperature/humidity sensor.

State transitions are pure functions over an immutable `DeviceState`;
`DeviceNode` wraps them behind a single lock so concurrent callers observe a
serialized history (and records that history in an op journal).
"""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Iterable, Optional, Sequence

TEMP_MIN_C = 0
TEMP_MAX_C = 50
HUMIDITY_MIN_PCT = 20
HUMIDITY_MAX_PCT = 90

#: The four LED drive channels. Logical pin ids, fixed once, shared with the
#: control plane and the dashboard.
PWM_PINS = (2, 5, 6, 9)
#: GPIO pins the emulated node exposes for digital reads/writes.
DIGITAL_PINS = tuple(range(14))
DUTY_MAX = 255

DEFAULT_SAMPLE_INTERVAL_S = 15.0


class DeviceError(Exception):
    """Base for device-level rejections."""


class UnknownPinError(DeviceError):
    pass


class PwmCapabilityError(DeviceError):
    pass


class DutyRangeError(DeviceError):
    pass


class ReadingRangeError(DeviceError):
    pass


class NoScenarioDataError(DeviceError):
    """Query time precedes the first scenario point."""


@dataclass(frozen=True)
class SensorReading:
    """One integer temperature/humidity measurement.

    The sensor reports whole degrees / whole percent; values outside its
    operating range are rejected at construction.
    """

    temperature_c: int
    humidity_pct: int
    taken_at: Optional[datetime] = None

    def __post_init__(self):
        if not TEMP_MIN_C <= self.temperature_c <= TEMP_MAX_C:
            raise ReadingRangeError(
                f"temperature {self.temperature_c} C outside "
                f"[{TEMP_MIN_C}, {TEMP_MAX_C}]"
            )
        if not HUMIDITY_MIN_PCT <= self.humidity_pct <= HUMIDITY_MAX_PCT:
            raise ReadingRangeError(
                f"humidity {self.humidity_pct} % outside "
                f"[{HUMIDITY_MIN_PCT}, {HUMIDITY_MAX_PCT}]"
            )


@dataclass(frozen=True)
class DeviceState:
    """Snapshot of the node's registers.

    Treat instances as immutable: the `apply_*` functions below return fresh
    states and never mutate their input, so a snapshot handed to a reader
    stays valid forever.
    """

    device_id: str
    digital_pins: dict[int, int]
    pwm_channels: dict[int, int]
    sample_interval: timedelta
    last_sample_at: Optional[datetime] = None

    @classmethod
    def initial(
        cls,
        device_id: str,
        sample_interval_s: float = DEFAULT_SAMPLE_INTERVAL_S,
        digital_pins: Sequence[int] = DIGITAL_PINS,
        pwm_pins: Sequence[int] = PWM_PINS,
    ) -> "DeviceState":
        return cls(
            device_id=device_id,
            digital_pins={pin: 0 for pin in digital_pins},
            pwm_channels={pin: 0 for pin in pwm_pins},
            sample_interval=timedelta(seconds=sample_interval_s),
        )


def apply_digital(state: DeviceState, pin: int, level: int) -> DeviceState:
    """Set a digital pin to 0 or 1. Idempotent; unknown pins are rejected."""
    if pin not in state.digital_pins:
        raise UnknownPinError(f"no digital pin {pin} on this device")
    if level not in (0, 1):
        raise ValueError(f"digital level must be 0 or 1, got {level!r}")
    pins = dict(state.digital_pins)
    pins[pin] = level
    return replace(state, digital_pins=pins)


def apply_pwm(state: DeviceState, pin: int, duty: int) -> DeviceState:
    """Set an LED channel's duty register (0..255). Idempotent."""
    if pin not in state.pwm_channels:
        if pin in state.digital_pins:
            raise PwmCapabilityError(f"pin {pin} is not PWM-capable")
        raise UnknownPinError(f"no pin {pin} on this device")
    if not 0 <= duty <= DUTY_MAX:
        raise DutyRangeError(f"duty {duty} outside [0, {DUTY_MAX}]")
    channels = dict(state.pwm_channels)
    channels[pin] = duty
    return replace(state, pwm_channels=channels)


def tick(state: DeviceState, now: datetime) -> tuple[DeviceState, bool]:
    """Advance the sample scheduler.

    A sample is due on the very first tick and thereafter whenever at least
    one full sample interval has elapsed (boundary inclusive). When due, the
    returned state carries ``last_sample_at = now``.
    """
    if state.last_sample_at is not None and now < state.last_sample_at:
        raise ValueError("tick clock moved backwards")
    due = (
        state.last_sample_at is None
        or now - state.last_sample_at >= state.sample_interval
    )
    if due:
        return replace(state, last_sample_at=now), True
    return state, False


@dataclass(frozen=True)
class ScenarioPoint:
    at: datetime
    temperature_c: int
    humidity_pct: int


class Scenario:
    """Ordered environment timeline replayed with step-hold semantics.

    Timestamps must be strictly increasing and all values must be within the
    sensor's operating range.
    """

    def __init__(self, points: Iterable[ScenarioPoint]):
        pts = tuple(points)
        if not pts:
            raise ValueError("scenario needs at least one point")
        for i, p in enumerate(pts):
            # Range check via the reading type so both share one guard.
            SensorReading(p.temperature_c, p.humidity_pct, p.at)
            if i and pts[i - 1].at >= p.at:
                raise ValueError(
                    f"scenario timestamps not strictly increasing at index {i}"
                )
        self._points = pts
        self._times = [p.at for p in pts]

    @property
    def points(self) -> tuple[ScenarioPoint, ...]:
        return self._points

    @property
    def start(self) -> datetime:
        return self._points[0].at

    @property
    def end(self) -> datetime:
        return self._points[-1].at

    def __len__(self) -> int:
        return len(self._points)

    def sample(self, at: datetime) -> SensorReading:
        """Value of the latest point with timestamp <= ``at``."""
        idx = bisect.bisect_right(self._times, at) - 1
        if idx < 0:
            raise NoScenarioDataError(
                f"no scenario data at {at.isoformat()} "
                f"(scenario starts {self.start.isoformat()})"
            )
        point = self._points[idx]
        return SensorReading(point.temperature_c, point.humidity_pct, at)


def sample_environment(scenario: Scenario, at: datetime) -> SensorReading:
    """Step-hold sample of the scenario at ``at`` (pure)."""
    return scenario.sample(at)


@dataclass(frozen=True)
class OpRecord:
    """One committed device operation, in global commit order."""

    seq: int
    kind: str  # "digital_write" | "analog_write" | "digital_read"
    pin: int
    value: Optional[int]
    result: int


class DeviceNode:
    """Single-owner wrapper: every mutation goes through one lock, readers
    get immutable snapshots, and committed ops land in a journal usable as a
    serialized-replay oracle."""

    def __init__(self, state: DeviceState, scenario: Optional[Scenario] = None):
        self._lock = threading.Lock()
        self._state = state
        self._scenario = scenario
        self._last_reading: Optional[SensorReading] = None
        self._journal: list[OpRecord] = []

    @property
    def scenario(self) -> Optional[Scenario]:
        return self._scenario

    def snapshot(self) -> DeviceState:
        with self._lock:
            return self._state

    def journal(self) -> list[OpRecord]:
        with self._lock:
            return list(self._journal)

    def last_reading(self) -> Optional[SensorReading]:
        with self._lock:
            return self._last_reading

    def _record(self, kind: str, pin: int, value: Optional[int], result: int) -> None:
        self._journal.append(
            OpRecord(len(self._journal) + 1, kind, pin, value, result)
        )

    def digital_write(self, pin: int, level: int) -> int:
        with self._lock:
            self._state = apply_digital(self._state, pin, level)
            stored = self._state.digital_pins[pin]
            self._record("digital_write", pin, level, stored)
            return stored

    def analog_write(self, pin: int, duty: int) -> int:
        with self._lock:
            self._state = apply_pwm(self._state, pin, duty)
            stored = self._state.pwm_channels[pin]
            self._record("analog_write", pin, duty, stored)
            return stored

    def digital_read(self, pin: int) -> int:
        with self._lock:
            if pin not in self._state.digital_pins:
                raise UnknownPinError(f"no digital pin {pin} on this device")
            level = self._state.digital_pins[pin]
            self._record("digital_read", pin, None, level)
            return level

    def tick(self, now: datetime) -> bool:
        """Run the sample scheduler; True when a sample is due."""
        with self._lock:
            self._state, due = tick(self._state, now)
            return due

    def untick(self, previous_sample_at: Optional[datetime]) -> None:
        """Roll the scheduler back after a failed push so the next cycle
        retries promptly."""
        with self._lock:
            self._state = replace(self._state, last_sample_at=previous_sample_at)

    def read_sensor(self, at: datetime) -> SensorReading:
        """Fresh step-hold sample from the scenario; caches the reading."""
        if self._scenario is None:
            raise NoScenarioDataError("device has no scenario attached")
        reading = self._scenario.sample(at)
        with self._lock:
            self._last_reading = reading
        return reading

    def store_reading(self, reading: SensorReading) -> None:
        with self._lock:
            self._last_reading = reading
