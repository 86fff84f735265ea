"""Exact-arithmetic aggregation over telemetry entries.

Means are computed as rationals and only rounded at the edge, so display
values match what integer charts would show without accumulating float
error. Rounding is half-up to match charts that label 14.5 as 15.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, datetime, timezone
from fractions import Fraction
from typing import Iterable, Sequence, Union

from .store import TelemetryEntry

Number = Union[int, Fraction]

HALF = Fraction(1, 2)


class EmptyWindowError(ValueError):
    """Asked to summarize a window containing no values."""


def round_half_up(x: Number) -> int:
    """Round to the nearest integer, ties away from the floor (14.5 -> 15)."""
    return math.floor(Fraction(x) + HALF)


@dataclass(frozen=True)
class DailyStat:
    """One UTC day's worth of a single field."""

    date: date
    mean: Fraction
    min: int
    max: int
    count: int

    @property
    def mean_rounded(self) -> int:
        return round_half_up(self.mean)


@dataclass(frozen=True)
class AggregateSummary:
    """Whole-window rollup of a single field."""

    mean_rounded: int
    min: int
    max: int
    count: int
    window: tuple[datetime, datetime]

    @property
    def start(self) -> datetime:
        return self.window[0]

    @property
    def end(self) -> datetime:
        return self.window[1]


def _utc_day(ts: datetime) -> date:
    return ts.astimezone(timezone.utc).date()


def _with_field(
    entries: Iterable[TelemetryEntry], field: str
) -> list[tuple[TelemetryEntry, int]]:
    carrying = []
    for entry in entries:
        value = entry.fields.get(field)
        if value is not None:
            carrying.append((entry, value))
    return carrying


def daily_aggregate(
    entries: Sequence[TelemetryEntry], field: str
) -> list[DailyStat]:
    """Group entries carrying ``field`` by UTC day.

    Expects entries sorted by created_at; emits one stat per day that has
    at least one value, in day order. Days without entries are absent.
    """
    stats: list[DailyStat] = []
    day = None
    values: list[int] = []

    def flush() -> None:
        if day is None or not values:
            return
        stats.append(
            DailyStat(
                date=day,
                mean=Fraction(sum(values), len(values)),
                min=min(values),
                max=max(values),
                count=len(values),
            )
        )

    for entry, value in _with_field(entries, field):
        entry_day = _utc_day(entry.created_at)
        if entry_day != day:
            flush()
            day = entry_day
            values = []
        values.append(value)
    flush()
    return stats


def summarize(entries: Sequence[TelemetryEntry], field: str) -> AggregateSummary:
    """Whole-window mean (half-up), min, max, and count for ``field``.

    The window spans the first to last created_at of the entries that carry
    the field. Raises `EmptyWindowError` when none do.
    """
    carrying = _with_field(entries, field)
    if not carrying:
        raise EmptyWindowError(f"no values for {field!r} in the given entries")
    values = [value for _, value in carrying]
    mean = Fraction(sum(values), len(values))
    return AggregateSummary(
        mean_rounded=round_half_up(mean),
        min=min(values),
        max=max(values),
        count=len(values),
        window=(carrying[0][0].created_at, carrying[-1][0].created_at),
    )
