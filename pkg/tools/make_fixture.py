#!/usr/bin/env python3
"""Construct the 61-point replication dataset and verify its aggregates.

The week of 8-14 July 2016, integer degrees C and %RH, hourly readings
during the day. The arrays below were chosen so that the whole-week and
per-day statistics land exactly on the published figures:

    temperature mean (half-up)  15
    temperature min / max       7 / 19
    humidity mean (half-up)     82
    days 9-13 daily temp mean   14 each (exact)
    total points                61

The script recomputes every target from scratch and refuses to write the
file if any of them is off, so the fixture can never drift silently.
Running it is idempotent: fixtures/july2016.csv is rewritten in place.
"""

from __future__ import annotations

import csv
import sys
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from math import floor
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "july2016.csv"

# Hourly sample times: long days (9 samples, 08:00-16:00 UTC) midweek,
# short days (8 samples, 08:00-15:00 UTC) on the boundary days.
DAYS = [
    # (day, temps, humidities)
    (8, [16, 17, 18, 19, 19, 18, 17, 17], [80, 79, 78, 77, 76, 78, 80, 81]),
    (9, [13, 13, 14, 15, 15, 14, 14, 14, 14], [83, 83, 82, 82, 81, 82, 82, 83, 83]),
    (10, [12, 13, 14, 15, 16, 15, 14, 13, 14], [83, 83, 82, 82, 81, 82, 82, 83, 83]),
    (11, [14, 14, 14, 14, 14, 14, 14, 14, 14], [83, 83, 82, 82, 81, 82, 82, 83, 83]),
    (12, [13, 14, 15, 14, 13, 14, 15, 14, 14], [83, 83, 82, 82, 81, 82, 82, 83, 83]),
    (13, [12, 14, 15, 16, 15, 14, 13, 13, 14], [83, 83, 82, 82, 81, 82, 82, 83, 83]),
    (14, [7, 11, 15, 17, 19, 18, 17, 16], [90, 88, 86, 83, 81, 80, 82, 84]),
]


def round_half_up(x: Fraction) -> int:
    return floor(x + Fraction(1, 2))


def build_rows() -> list[tuple[datetime, int, int]]:
    rows = []
    for day, temps, hums in DAYS:
        assert len(temps) == len(hums), f"day {day}: ragged arrays"
        start = datetime(2016, 7, day, 8, 0, tzinfo=timezone.utc)
        for hour, (t, h) in enumerate(zip(temps, hums)):
            rows.append((start + timedelta(hours=hour), t, h))
    return rows


def verify(rows: list[tuple[datetime, int, int]]) -> None:
    temps = [t for _, t, _ in rows]
    hums = [h for _, _, h in rows]
    assert len(rows) == 61, f"expected 61 points, built {len(rows)}"
    assert all(rows[i][0] < rows[i + 1][0] for i in range(len(rows) - 1))
    assert all(0 <= t <= 50 for t in temps), "temperature outside sensor range"
    assert all(20 <= h <= 90 for h in hums), "humidity outside sensor range"

    week_temp = Fraction(sum(temps), len(temps))
    week_hum = Fraction(sum(hums), len(hums))
    assert round_half_up(week_temp) == 15, f"temp mean {float(week_temp):.3f}"
    assert round_half_up(week_hum) == 82, f"hum mean {float(week_hum):.3f}"
    assert min(temps) == 7 and max(temps) == 19

    by_day: dict[int, list[int]] = {}
    for at, t, _ in rows:
        by_day.setdefault(at.day, []).append(t)
    for day in (9, 10, 11, 12, 13):
        mean = Fraction(sum(by_day[day]), len(by_day[day]))
        assert round_half_up(mean) == 14, f"day {day} mean {float(mean):.3f}"


def main() -> int:
    rows = build_rows()
    verify(rows)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ts", "temp_c", "rh_pct"])
        for at, t, h in rows:
            writer.writerow([at.strftime("%Y-%m-%dT%H:%M:%SZ"), t, h])
    print(f"wrote {len(rows)} rows to {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
