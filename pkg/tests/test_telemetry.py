"""Telemetry store semantics, exact aggregation, the HTTP surface, and the
push client."""

from __future__ import annotations

import json
import random
import urllib.error
import urllib.request
from datetime import datetime, timedelta, timezone
from fractions import Fraction

import pytest

from iotnode.clock import FakeClock
from iotnode.telemetry import (
    AuthError,
    PushError,
    RateLimitedError,
    TelemetryClient,
    TelemetryServer,
    TelemetryStore,
    UnknownChannelError,
)
from iotnode.telemetry.aggregate import (
    EmptyWindowError,
    daily_aggregate,
    round_half_up,
    summarize,
)
from iotnode.telemetry.store import (
    DEFAULT_WRITE_KEY,
    Channel,
    TelemetryEntry,
    default_field_names,
    generate_write_key,
)

T0 = datetime(2016, 7, 8, 8, 0, 0, tzinfo=timezone.utc)


def make_store(tmp_path, min_interval_s: float = 0.0) -> TelemetryStore:
    store = TelemetryStore(tmp_path / "store", min_interval_s=min_interval_s)
    store.create_channel(write_key=DEFAULT_WRITE_KEY, created_at=T0)
    return store


def entry(eid: int, seconds: int, **fields: int) -> TelemetryEntry:
    return TelemetryEntry(
        entry_id=eid,
        created_at=T0 + timedelta(seconds=seconds),
        fields=fields,
    )


# -- store ----------------------------------------------------------------


def test_first_write_gets_entry_id_one(tmp_path):
    store = make_store(tmp_path)
    eid = store.write_update(DEFAULT_WRITE_KEY, {"field1": 15, "field2": 82}, T0)
    assert eid == 1
    stored = store.entries(1)
    assert len(stored) == 1
    assert stored[0].fields == {"field1": 15, "field2": 82}
    assert stored[0].created_at == T0


def test_unknown_key_is_auth_error(tmp_path):
    store = make_store(tmp_path)
    with pytest.raises(AuthError):
        store.write_update("XXXXXXXXXXXXXXXX", {"field1": 1}, T0)


def test_rate_limit_window(tmp_path):
    store = make_store(tmp_path, min_interval_s=15.0)
    store.write_update(DEFAULT_WRITE_KEY, {"field1": 1}, T0)
    with pytest.raises(RateLimitedError):
        store.write_update(DEFAULT_WRITE_KEY, {"field1": 2}, T0 + timedelta(seconds=5))
    # A gap of exactly the interval is accepted.
    eid = store.write_update(
        DEFAULT_WRITE_KEY, {"field1": 3}, T0 + timedelta(seconds=15)
    )
    assert eid == 2


def test_rejections_leave_persisted_bytes(tmp_path):
    store = make_store(tmp_path, min_interval_s=15.0)
    store.write_update(DEFAULT_WRITE_KEY, {"field1": 1}, T0)
    before = store.store_hash()
    with pytest.raises(AuthError):
        store.write_update("AAAAAAAAAAAAAAAA", {"field1": 9}, T0 + timedelta(60))
    with pytest.raises(RateLimitedError):
        store.write_update(DEFAULT_WRITE_KEY, {"field1": 9}, T0 + timedelta(seconds=1))
    assert store.store_hash() == before


def test_entry_ids_are_contiguous(tmp_path):
    store = make_store(tmp_path)
    for i in range(10):
        store.write_update(
            DEFAULT_WRITE_KEY, {"field1": i}, T0 + timedelta(seconds=i)
        )
    assert [e.entry_id for e in store.entries(1)] == list(range(1, 11))


def test_write_persists_before_returning(tmp_path):
    store = make_store(tmp_path)
    store.write_update(DEFAULT_WRITE_KEY, {"field1": 7}, T0)
    lines = (tmp_path / "store" / "channel_1.ndjson").read_text().splitlines()
    record = json.loads(lines[0])
    assert record["entry_id"] == 1
    assert record["f1"] == 7
    assert record["ts"] == "2016-07-08T08:00:00Z"


def test_created_at_overrides_now(tmp_path):
    store = make_store(tmp_path)
    taken = T0 + timedelta(seconds=30)
    store.write_update(
        DEFAULT_WRITE_KEY, {"field1": 1}, T0 + timedelta(hours=1), created_at=taken
    )
    assert store.entries(1)[0].created_at == taken


def test_timestamps_clamped_non_decreasing(tmp_path):
    store = make_store(tmp_path)
    store.write_update(DEFAULT_WRITE_KEY, {"field1": 1}, T0 + timedelta(seconds=60))
    store.write_update(DEFAULT_WRITE_KEY, {"field1": 2}, T0)  # arrives late
    stamps = [e.created_at for e in store.entries(1)]
    assert stamps[1] == stamps[0]
    assert stamps == sorted(stamps)


def test_field_validation(tmp_path):
    store = make_store(tmp_path)
    with pytest.raises(ValueError):
        store.write_update(DEFAULT_WRITE_KEY, {}, T0)
    with pytest.raises(ValueError):
        store.write_update(DEFAULT_WRITE_KEY, {"field9": 1}, T0)
    with pytest.raises(ValueError):
        store.write_update(DEFAULT_WRITE_KEY, {"field1": True}, T0)
    with pytest.raises(ValueError):
        store.write_update(DEFAULT_WRITE_KEY, {"field1": "hot"}, T0)
    assert store.entries(1) == []


def test_channel_key_format():
    with pytest.raises(ValueError):
        Channel(1, "short", default_field_names(), T0)
    with pytest.raises(ValueError):
        Channel(1, "w4jx8whviqjpnbn9", default_field_names(), T0)
    with pytest.raises(ValueError):
        Channel(0, DEFAULT_WRITE_KEY, default_field_names(), T0)
    key = generate_write_key()
    assert len(key) == 16
    assert key.isalnum() and key.upper() == key


def test_default_field_labels():
    names = default_field_names()
    assert names["field1"] == "temperature"
    assert names["field2"] == "humidity"
    assert all(names[f"field{i}"] is None for i in range(3, 9))


def test_duplicate_write_key_rejected(tmp_path):
    store = make_store(tmp_path)
    with pytest.raises(ValueError):
        store.create_channel(write_key=DEFAULT_WRITE_KEY)


def test_read_feed_window_and_limit(tmp_path):
    store = make_store(tmp_path)
    for i in range(61):
        store.write_update(
            DEFAULT_WRITE_KEY, {"field1": i}, T0 + timedelta(minutes=i)
        )
    assert len(store.read_feed(1)) == 61
    assert [e.entry_id for e in store.read_feed(1, limit=61)] == list(range(1, 62))
    # Last-N truncation.
    last10 = store.read_feed(1, limit=10)
    assert [e.entry_id for e in last10] == list(range(52, 62))
    # Inclusive window bounds.
    window = store.read_feed(
        1, start=T0 + timedelta(minutes=10), end=T0 + timedelta(minutes=12)
    )
    assert [e.fields["field1"] for e in window] == [10, 11, 12]


def test_read_feed_validation(tmp_path):
    store = make_store(tmp_path)
    assert store.read_feed(1) == []
    with pytest.raises(UnknownChannelError):
        store.read_feed(99)
    with pytest.raises(ValueError):
        store.read_feed(1, start=T0 + timedelta(1), end=T0)
    with pytest.raises(ValueError):
        store.read_feed(1, limit=0)


def test_read_feed_is_side_effect_free(tmp_path):
    store = make_store(tmp_path)
    store.write_update(DEFAULT_WRITE_KEY, {"field1": 1}, T0)
    before = store.store_hash()
    store.read_feed(1, limit=1)
    assert store.store_hash() == before


def test_reload_reproduces_state(tmp_path):
    store = make_store(tmp_path)
    for i in range(25):
        store.write_update(
            DEFAULT_WRITE_KEY,
            {"field1": i, "field2": 100 - i},
            T0 + timedelta(seconds=i),
        )
    reloaded = TelemetryStore(tmp_path / "store", min_interval_s=0.0)
    assert reloaded.entries(1) == store.entries(1)
    assert reloaded.store_hash() == store.store_hash()
    assert reloaded.channel(1).write_key == DEFAULT_WRITE_KEY
    # The reloaded appender continues the id sequence.
    assert reloaded.write_update(DEFAULT_WRITE_KEY, {"field1": 9}, T0 + timedelta(60)) == 26


def test_corrupt_id_sequence_refuses_to_load(tmp_path):
    store = make_store(tmp_path)
    store.write_update(DEFAULT_WRITE_KEY, {"field1": 1}, T0)
    path = tmp_path / "store" / "channel_1.ndjson"
    with path.open("a") as fh:
        fh.write(json.dumps({"entry_id": 5, "ts": "2016-07-08T09:00:00Z", "f1": 2}) + "\n")
    with pytest.raises(ValueError) as info:
        TelemetryStore(tmp_path / "store")
    # The error names the file and the offending line.
    assert "channel_1.ndjson:2" in str(info.value)


# -- aggregation ----------------------------------------------------------


def test_round_half_up():
    assert round_half_up(Fraction(29, 2)) == 15  # 14.5
    assert round_half_up(Fraction(144, 10)) == 14  # 14.4
    assert round_half_up(14) == 14
    assert round_half_up(Fraction(-1, 2)) == 0  # -0.5 rounds up



def test_daily_aggregate_constant_day():
    entries = [entry(i + 1, i * 60, field1=14) for i in range(3)]
    stats = daily_aggregate(entries, "field1")
    assert len(stats) == 1
    stat = stats[0]
    assert stat.mean == 14
    assert (stat.min, stat.max, stat.count) == (14, 14, 3)
    assert stat.mean_rounded == 14


def test_daily_aggregate_splits_utc_days():
    entries = [
        entry(1, 0, field1=10),
        entry(2, 3600, field1=20),
        entry(3, 86400, field1=30),  # next day
    ]
    stats = daily_aggregate(entries, "field1")
    assert [s.date.day for s in stats] == [8, 9]
    assert stats[0].mean == 15
    assert stats[1].mean == 30


def test_daily_aggregate_skips_entries_without_field():
    entries = [entry(1, 0, field1=10), entry(2, 60, field2=50)]
    stats = daily_aggregate(entries, "field1")
    assert len(stats) == 1
    assert stats[0].count == 1
    assert daily_aggregate([], "field1") == []


def test_summarize_singleton():
    summary = summarize([entry(1, 0, field1=15, field2=82)], "field1")
    assert summary.mean_rounded == 15
    assert (summary.min, summary.max, summary.count) == (15, 15, 1)
    assert summary.start == summary.end == T0


def test_summarize_empty_raises():
    with pytest.raises(EmptyWindowError):
        summarize([], "field1")
    with pytest.raises(EmptyWindowError):
        summarize([entry(1, 0, field2=5)], "field1")


def test_summarize_window_spans_carrying_entries():
    entries = [
        entry(1, 0, field2=50),
        entry(2, 60, field1=10),
        entry(3, 120, field1=20),
        entry(4, 180, field2=60),
    ]
    summary = summarize(entries, "field1")
    assert summary.start == T0 + timedelta(seconds=60)
    assert summary.end == T0 + timedelta(seconds=120)


def _brute_force_daily(rows: list[tuple[datetime, int]]):
    by_day: dict = {}
    for ts, value in rows:
        by_day.setdefault(ts.astimezone(timezone.utc).date(), []).append(value)
    return {
        day: (
            Fraction(sum(vals), len(vals)),
            min(vals),
            max(vals),
            len(vals),
        )
        for day, vals in by_day.items()
    }


def test_aggregate_matches_brute_force_oracle():
    # Random entry sets against an independent group-by recomputation.
    rng = random.Random(0xA66)
    for _ in range(1000):
        n = rng.randrange(0, 120)
        offsets = sorted(rng.randrange(0, 10 * 86400) for _ in range(n))
        entries = []
        rows = []
        for i, off in enumerate(offsets):
            ts = T0 + timedelta(seconds=off)
            value = rng.randrange(-50, 151)
            entries.append(
                TelemetryEntry(entry_id=i + 1, created_at=ts, fields={"field1": value})
            )
            rows.append((ts, value))

        stats = daily_aggregate(entries, "field1")
        expected = _brute_force_daily(rows)
        assert [s.date for s in stats] == sorted(expected)
        for s in stats:
            mean, lo, hi, count = expected[s.date]
            assert s.mean == mean
            assert (s.min, s.max, s.count) == (lo, hi, count)
            assert s.min <= s.mean <= s.max

        if rows:
            summary = summarize(entries, "field1")
            values = [v for _, v in rows]
            assert summary.mean_rounded == round_half_up(
                Fraction(sum(values), len(values))
            )
            assert summary.min == min(values)
            assert summary.max == max(values)
            assert summary.count == len(values)
            assert summary.min <= summary.mean_rounded <= summary.max
        else:
            with pytest.raises(EmptyWindowError):
                summarize(entries, "field1")


# -- HTTP surface ---------------------------------------------------------


@pytest.fixture
def server(tmp_path):
    store = make_store(tmp_path, min_interval_s=15.0)
    clock = FakeClock(T0)
    with TelemetryServer(store, port=0, clock=clock) as srv:
        yield srv, store, clock


def fetch(url: str):
    try:
        with urllib.request.urlopen(url, timeout=5.0) as resp:
            return resp.status, dict(resp.headers), resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, dict(exc.headers), exc.read()


def test_http_update_success(server):
    srv, store, _ = server
    status, headers, body = fetch(
        f"{srv.url}/update?api_key={DEFAULT_WRITE_KEY}&field1=15&field2=82"
    )
    assert status == 200
    assert body == b"1"
    assert headers["Content-Type"] == "text/plain"
    assert headers["Access-Control-Allow-Origin"] == "*"
    assert store.entries(1)[0].fields == {"field1": 15, "field2": 82}


def test_http_update_auth_reject(server):
    srv, store, _ = server
    status, headers, body = fetch(
        f"{srv.url}/update?api_key=BBBBBBBBBBBBBBBB&field1=1"
    )
    assert status == 200
    assert body == b"0"
    assert headers["X-Reject-Reason"] == "auth"
    assert store.entries(1) == []


def test_http_update_rate_limit_reject(server):
    srv, _, clock = server
    url = f"{srv.url}/update?api_key={DEFAULT_WRITE_KEY}&field1=1"
    assert fetch(url)[2] == b"1"
    clock.sleep(5)  # within the 15 s window
    status, headers, body = fetch(url)
    assert (status, body) == (200, b"0")
    assert headers["X-Reject-Reason"] == "rate-limit"
    clock.sleep(10)  # now a full interval has passed
    assert fetch(url)[2] == b"2"


def test_http_update_created_at(server):
    srv, store, _ = server
    taken = "2016-07-08T09:30:00Z"
    status, _, body = fetch(
        f"{srv.url}/update?api_key={DEFAULT_WRITE_KEY}&field1=5&created_at={taken}"
    )
    assert (status, body) == (200, b"1")
    assert store.entries(1)[0].created_at == datetime(
        2016, 7, 8, 9, 30, tzinfo=timezone.utc
    )


def test_http_update_bad_requests(server):
    srv, _, _ = server
    assert fetch(f"{srv.url}/update?api_key={DEFAULT_WRITE_KEY}")[0] == 400
    assert (
        fetch(f"{srv.url}/update?api_key={DEFAULT_WRITE_KEY}&field1=hot")[0] == 400
    )
    assert (
        fetch(
            f"{srv.url}/update?api_key={DEFAULT_WRITE_KEY}&field1=1&created_at=junk"
        )[0]
        == 400
    )


def test_http_feeds_document(server):
    srv, _, clock = server
    for i, value in enumerate((15, 14, 13)):
        fetch(f"{srv.url}/update?api_key={DEFAULT_WRITE_KEY}&field1={value}&field2=80")
        clock.sleep(60)
    status, _, body = fetch(f"{srv.url}/channels/1/feeds")
    assert status == 200
    doc = json.loads(body)
    assert doc["channel"]["id"] == 1
    assert doc["channel"]["field1"] == "temperature"
    assert doc["channel"]["field2"] == "humidity"
    assert "field3" not in doc["channel"]
    assert [f["entry_id"] for f in doc["feeds"]] == [1, 2, 3]
    assert [f["field1"] for f in doc["feeds"]] == [15, 14, 13]
    assert doc["feeds"][0]["created_at"] == "2016-07-08T08:00:00Z"


def test_http_feeds_window_and_results(server):
    srv, _, clock = server
    for value in range(6):
        fetch(f"{srv.url}/update?api_key={DEFAULT_WRITE_KEY}&field1={value}")
        clock.sleep(3600)
    doc = json.loads(fetch(f"{srv.url}/channels/1/feeds?results=2")[2])
    assert [f["field1"] for f in doc["feeds"]] == [4, 5]
    doc = json.loads(
        fetch(
            f"{srv.url}/channels/1/feeds"
            "?start=2016-07-08T09:00:00Z&end=2016-07-08T11:00:00Z"
        )[2]
    )
    assert [f["field1"] for f in doc["feeds"]] == [1, 2, 3]


def test_http_feeds_errors(server):
    srv, _, _ = server
    assert fetch(f"{srv.url}/channels/9/feeds")[0] == 404
    assert fetch(f"{srv.url}/channels/abc/feeds")[0] == 404
    assert fetch(f"{srv.url}/channels/1/feeds?results=x")[0] == 400
    assert fetch(
        f"{srv.url}/channels/1/feeds?start=2016-07-09T00:00:00Z&end=2016-07-08T00:00:00Z"
    )[0] == 400


def test_http_summary(server):
    srv, _, clock = server
    for value in (10, 20, 19):
        fetch(f"{srv.url}/update?api_key={DEFAULT_WRITE_KEY}&field1={value}")
        clock.sleep(60)
    doc = json.loads(fetch(f"{srv.url}/channels/1/summary?field=field1")[2])
    assert doc["channel"] == 1
    assert doc["field"] == "field1"
    # 49/3 = 16.33 rounds to 16.
    assert doc["mean_rounded"] == 16
    assert (doc["min"], doc["max"], doc["count"]) == (10, 20, 3)
    assert doc["window"] == {
        "start": "2016-07-08T08:00:00Z",
        "end": "2016-07-08T08:02:00Z",
    }


def test_http_summary_empty_channel(server):
    srv, _, _ = server
    doc = json.loads(fetch(f"{srv.url}/channels/1/summary?field=field3")[2])
    assert doc["mean_rounded"] is None
    assert doc["count"] == 0
    assert doc["window"] is None


def test_http_summary_errors(server):
    srv, _, _ = server
    assert fetch(f"{srv.url}/channels/1/summary")[0] == 400
    assert fetch(f"{srv.url}/channels/1/summary?field=field9")[0] == 400
    assert fetch(f"{srv.url}/channels/7/summary?field=field1")[0] == 404


def test_http_unknown_route_and_method(server):
    srv, _, _ = server
    assert fetch(f"{srv.url}/nope")[0] == 404
    req = urllib.request.Request(f"{srv.url}/update", data=b"x", method="POST")
    try:
        with urllib.request.urlopen(req, timeout=5.0) as resp:
            status = resp.status
    except urllib.error.HTTPError as exc:
        status = exc.code
    assert status == 405


# -- client ---------------------------------------------------------------


def test_client_push_and_reads(server):
    srv, _, clock = server
    from iotnode.device import SensorReading

    client = TelemetryClient(srv.url, DEFAULT_WRITE_KEY)
    eid = client.push(SensorReading(15, 82, T0), at=T0)
    assert eid == 1
    # Within the rate window the push reports a soft drop.
    assert client.push(SensorReading(14, 80), at=T0 + timedelta(seconds=3)) is None
    clock.sleep(30)
    assert client.push(SensorReading(14, 80), at=T0 + timedelta(seconds=30)) == 2

    feed = client.read_feed(1)
    assert [f["field1"] for f in feed["feeds"]] == [15, 14]
    summary = client.read_summary(1, "field2")
    assert summary["mean_rounded"] == 81


def test_client_auth_failure_is_hard(server):
    srv, _, _ = server
    from iotnode.device import SensorReading

    client = TelemetryClient(srv.url, "CCCCCCCCCCCCCCCC")
    with pytest.raises(AuthError):
        client.push(SensorReading(15, 82, T0))


def test_client_network_failure_is_push_error(tmp_path):
    from iotnode.device import SensorReading

    store = make_store(tmp_path)
    srv = TelemetryServer(store, port=0)
    srv.start()
    url = srv.url
    srv.stop()
    client = TelemetryClient(url, DEFAULT_WRITE_KEY, timeout=0.5)
    with pytest.raises(PushError):
        client.push(SensorReading(15, 82, T0))
