"""Byte-exact and pulse-level codec for the sensor's single-wire 40-bit frame.

Frame layout: humidity integer byte, humidity decimal byte, temperature
integer byte, temperature decimal byte, additive checksum (sum of the first
four bytes mod 256). The emulated sensor always sends zero decimal bytes,
but the decoder preserves whatever arrives so fractional-resolution parts
can reuse it.

All functions are pure; timing thresholds are exported so tests and fault
injectors share the same constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Optional, Sequence

from .device import SensorReading

FRAME_LEN = 5
FRAME_BITS = 40

#: Nominal high-time of a transmitted 0 / 1 bit, microseconds.
BIT0_HIGH_US = 27.0
BIT1_HIGH_US = 70.0
#: Strictly above this reads as 1, at or below (and >= PULSE_MIN_US) as 0.
BIT_ONE_THRESHOLD_US = 49.5
#: Pulses outside [PULSE_MIN_US, PULSE_MAX_US] are a line fault.
PULSE_MIN_US = 20.0
PULSE_MAX_US = 90.0


class CodecError(Exception):
    """Base for framing/codec failures."""


class FrameLengthError(CodecError):
    pass


class ChecksumError(CodecError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"checksum mismatch: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class PulseTimingError(CodecError):
    def __init__(self, index: int, duration_us: float):
        super().__init__(
            f"pulse {index} high for {duration_us} us, outside "
            f"[{PULSE_MIN_US}, {PULSE_MAX_US}]"
        )
        self.index = index
        self.duration_us = duration_us


@dataclass(frozen=True)
class SensorFrame:
    """The 5 raw frame bytes.

    Construction does not verify the checksum; a frame recovered from a
    noisy pulse train legitimately carries a bad one. `parse_frame` and
    `decode_frame` are the validating entry points.
    """

    rh_int: int
    rh_dec: int
    t_int: int
    t_dec: int
    checksum: int

    def __post_init__(self):
        for name in ("rh_int", "rh_dec", "t_int", "t_dec", "checksum"):
            value = getattr(self, name)
            if not 0 <= value <= 255:
                raise ValueError(f"{name}={value!r} is not a byte")

    @classmethod
    def build(cls, rh_int: int, rh_dec: int, t_int: int, t_dec: int) -> "SensorFrame":
        """Frame with the checksum computed from the four data bytes."""
        return cls(rh_int, rh_dec, t_int, t_dec, (rh_int + rh_dec + t_int + t_dec) % 256)

    def expected_checksum(self) -> int:
        return (self.rh_int + self.rh_dec + self.t_int + self.t_dec) % 256

    @property
    def checksum_ok(self) -> bool:
        return self.checksum == self.expected_checksum()

    def to_bytes(self) -> bytes:
        return bytes((self.rh_int, self.rh_dec, self.t_int, self.t_dec, self.checksum))


def encode_frame(reading: SensorReading) -> SensorFrame:
    """Frame a reading for the wire: integer bytes only, decimals zero."""
    return SensorFrame.build(reading.humidity_pct, 0, reading.temperature_c, 0)


def parse_frame(raw: bytes) -> SensorFrame:
    """Parse 5 raw bytes, verifying length and checksum.

    Decimal bytes survive as received.
    """
    if len(raw) != FRAME_LEN:
        raise FrameLengthError(f"frame must be {FRAME_LEN} bytes, got {len(raw)}")
    frame = SensorFrame(*raw)
    if not frame.checksum_ok:
        raise ChecksumError(frame.expected_checksum(), frame.checksum)
    return frame


def decode_frame(raw: bytes, taken_at: Optional[datetime] = None) -> SensorReading:
    """Checksum-verified decode back to a reading.

    Raises `FrameLengthError` / `ChecksumError` for wire faults, and the
    reading's own `ReadingRangeError` if the decoded values fall outside the
    sensor's operating range.
    """
    frame = parse_frame(raw)
    return SensorReading(frame.t_int, frame.rh_int, taken_at)


def frame_to_pulses(frame: SensorFrame) -> tuple[float, ...]:
    """High-pulse durations for the 40 frame bits, MSB of each byte first."""
    pulses = []
    for byte in frame.to_bytes():
        for bit_pos in range(7, -1, -1):
            bit = (byte >> bit_pos) & 1
            pulses.append(BIT1_HIGH_US if bit else BIT0_HIGH_US)
    return tuple(pulses)


def pulses_to_frame(pulses: Sequence[float]) -> SensorFrame:
    """Classify 40 high-pulse durations back into a frame.

    The checksum is *not* verified here: line noise may corrupt any bit and
    the checksum byte is the decoder's to judge (`decode_frame`).
    """
    if len(pulses) != FRAME_BITS:
        raise FrameLengthError(f"pulse train must have {FRAME_BITS} pulses, got {len(pulses)}")
    data = bytearray()
    value = 0
    for i, duration in enumerate(pulses):
        if duration < PULSE_MIN_US or duration > PULSE_MAX_US:
            raise PulseTimingError(i, duration)
        bit = 1 if duration > BIT_ONE_THRESHOLD_US else 0
        value = (value << 1) | bit
        if i % 8 == 7:
            data.append(value)
            value = 0
    return SensorFrame(*data)
