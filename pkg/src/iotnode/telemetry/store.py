"""Channel store: keyed ingestion, contiguous entry ids, append-only files.

Layout under the store root:

    manifest.json          channel ids, write keys, field labels
    channel_<id>.ndjson    one record per line: {"entry_id", "ts", "f1".."f8"}

Writes to a channel serialize through that channel's appender lock and are
flushed and fsynced before the entry id is returned, so a crash never
acknowledges an unpersisted entry. Rejected writes (bad key, rate limit)
touch nothing. Reads hand out copies and never block appends for long.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import secrets
import string
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from ..clock import format_utc, parse_utc

DEFAULT_WRITE_KEY = "W4JX8WHVIQJPNBN9"
#: Minimum spacing between accepted writes to one channel, in seconds.
DEFAULT_MIN_INTERVAL_S = 15.0
FIELD_IDS = tuple(f"field{i}" for i in range(1, 9))
#: Short per-line keys for the on-disk records, f1..f8.
_SHORT_IDS = {fid: f"f{i}" for i, fid in enumerate(FIELD_IDS, start=1)}
_LONG_IDS = {short: fid for fid, short in _SHORT_IDS.items()}

_KEY_RE = re.compile(r"^[A-Z0-9]{16}$")
_KEY_ALPHABET = string.ascii_uppercase + string.digits

MANIFEST_NAME = "manifest.json"


class TelemetryError(Exception):
    pass


class AuthError(TelemetryError):
    """Write key does not belong to any channel."""


class RateLimitedError(TelemetryError):
    """Accepted-write spacing for the channel not yet elapsed."""


class UnknownChannelError(TelemetryError):
    pass


def default_field_names() -> dict[str, Optional[str]]:
    names: dict[str, Optional[str]] = {fid: None for fid in FIELD_IDS}
    names["field1"] = "temperature"
    names["field2"] = "humidity"
    return names


def generate_write_key() -> str:
    return "".join(secrets.choice(_KEY_ALPHABET) for _ in range(16))


@dataclass(frozen=True)
class Channel:
    channel_id: int
    write_key: str
    field_names: dict[str, Optional[str]]
    created_at: datetime

    def __post_init__(self) -> None:
        if self.channel_id < 1:
            raise ValueError(f"channel_id must be positive, got {self.channel_id}")
        if not _KEY_RE.match(self.write_key):
            raise ValueError("write key must be 16 uppercase alphanumerics")


@dataclass(frozen=True)
class TelemetryEntry:
    entry_id: int
    created_at: datetime
    fields: dict[str, int] = field(default_factory=dict)

    def value(self, field_id: str) -> Optional[int]:
        return self.fields.get(field_id)


def _validate_fields(fields: dict[str, int]) -> dict[str, int]:
    if not fields:
        raise ValueError("update carries no fields")
    clean: dict[str, int] = {}
    for fid in FIELD_IDS:
        if fid not in fields:
            continue
        value = fields[fid]
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{fid} must be an integer, got {value!r}")
        clean[fid] = value
    unknown = set(fields) - set(clean)
    if unknown:
        raise ValueError(f"unknown field ids: {sorted(unknown)}")
    return clean


def _as_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


class TelemetryStore:
    """All channels under one root directory."""

    def __init__(
        self,
        root: os.PathLike | str,
        *,
        min_interval_s: float = DEFAULT_MIN_INTERVAL_S,
    ) -> None:
        if min_interval_s < 0:
            raise ValueError("min_interval_s must be >= 0 (0 disables)")
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._min_interval = float(min_interval_s)
        self._global = threading.Lock()
        self._channels: dict[int, Channel] = {}
        self._entries: dict[int, list[TelemetryEntry]] = {}
        self._appenders: dict[int, threading.Lock] = {}
        self._by_key: dict[str, int] = {}
        self._load()

    # -- loading ---------------------------------------------------------

    def _manifest_path(self) -> Path:
        return self._root / MANIFEST_NAME

    def _channel_path(self, channel_id: int) -> Path:
        return self._root / f"channel_{channel_id}.ndjson"

    def _load(self) -> None:
        manifest = self._manifest_path()
        if not manifest.exists():
            return
        doc = json.loads(manifest.read_text("utf-8"))
        for raw in doc.get("channels", []):
            channel = Channel(
                channel_id=raw["channel_id"],
                write_key=raw["write_key"],
                field_names=dict(raw["field_names"]),
                created_at=parse_utc(raw["created_at"]),
            )
            self._register(channel)
            self._entries[channel.channel_id] = self._load_entries(channel.channel_id)

    def _load_entries(self, channel_id: int) -> list[TelemetryEntry]:
        path = self._channel_path(channel_id)
        entries: list[TelemetryEntry] = []
        if not path.exists():
            return entries
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                raw = json.loads(line)
                entry = TelemetryEntry(
                    entry_id=raw["entry_id"],
                    created_at=parse_utc(raw["ts"]),
                    fields={
                        _LONG_IDS[k]: v
                        for k, v in raw.items()
                        if k in _LONG_IDS
                    },
                )
                if entry.entry_id != len(entries) + 1:
                    raise ValueError(
                        f"{path.name}:{lineno}: entry_id {entry.entry_id} breaks "
                        f"the 1..N sequence"
                    )
                entries.append(entry)
        return entries

    def _register(self, channel: Channel) -> None:
        if channel.channel_id in self._channels:
            raise ValueError(f"duplicate channel id {channel.channel_id}")
        if channel.write_key in self._by_key:
            raise ValueError("write key already in use by another channel")
        self._channels[channel.channel_id] = channel
        self._by_key[channel.write_key] = channel.channel_id
        self._appenders[channel.channel_id] = threading.Lock()
        self._entries.setdefault(channel.channel_id, [])

    # -- channel management ----------------------------------------------

    def create_channel(
        self,
        channel_id: Optional[int] = None,
        *,
        write_key: Optional[str] = None,
        field_names: Optional[dict[str, Optional[str]]] = None,
        created_at: Optional[datetime] = None,
    ) -> Channel:
        with self._global:
            if channel_id is None:
                channel_id = max(self._channels, default=0) + 1
            names = default_field_names()
            if field_names:
                for fid, label in field_names.items():
                    if fid not in names:
                        raise ValueError(f"unknown field id {fid!r}")
                    names[fid] = label
            channel = Channel(
                channel_id=channel_id,
                write_key=write_key if write_key is not None else generate_write_key(),
                field_names=names,
                created_at=_as_utc(created_at or datetime.now(timezone.utc)),
            )
            self._register(channel)
            self._write_manifest()
            return channel

    def _write_manifest(self) -> None:
        doc = {
            "version": 1,
            "channels": [
                {
                    "channel_id": ch.channel_id,
                    "write_key": ch.write_key,
                    "field_names": ch.field_names,
                    "created_at": format_utc(ch.created_at),
                }
                for ch in sorted(self._channels.values(), key=lambda c: c.channel_id)
            ],
        }
        tmp = self._manifest_path().with_suffix(".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self._manifest_path())

    # -- lookups ---------------------------------------------------------

    def channels(self) -> list[Channel]:
        with self._global:
            return sorted(self._channels.values(), key=lambda c: c.channel_id)

    def channel(self, channel_id: int) -> Channel:
        with self._global:
            try:
                return self._channels[channel_id]
            except KeyError:
                raise UnknownChannelError(f"no channel {channel_id}") from None

    def channel_for_key(self, key: str) -> Channel:
        with self._global:
            channel_id = self._by_key.get(key)
            if channel_id is None:
                raise AuthError("write key does not match any channel")
            return self._channels[channel_id]

    # -- writes ----------------------------------------------------------

    def write_update(
        self,
        key: str,
        fields: dict[str, int],
        now: datetime,
        *,
        created_at: Optional[datetime] = None,
    ) -> int:
        """Append one entry to the channel owned by ``key``.

        ``created_at`` (when the sample was taken) overrides ``now`` (when
        the request arrived) as the entry timestamp; timestamps are clamped
        to keep the channel non-decreasing. Returns the new entry id after
        the line is on disk.
        """
        channel = self.channel_for_key(key)
        clean = _validate_fields(fields)
        effective = _as_utc(created_at if created_at is not None else now)
        lock = self._appenders[channel.channel_id]
        with lock:
            entries = self._entries[channel.channel_id]
            if entries:
                last_ts = entries[-1].created_at
                if effective < last_ts:
                    effective = last_ts
                gap = (effective - last_ts).total_seconds()
                if self._min_interval > 0 and gap < self._min_interval:
                    raise RateLimitedError(
                        f"channel {channel.channel_id}: {gap:.1f}s since last "
                        f"accepted write, need {self._min_interval:.1f}s"
                    )
            entry = TelemetryEntry(
                entry_id=len(entries) + 1,
                created_at=effective,
                fields=clean,
            )
            self._append_record(channel.channel_id, entry)
            entries.append(entry)
            return entry.entry_id

    def _append_record(self, channel_id: int, entry: TelemetryEntry) -> None:
        record: dict[str, object] = {
            "entry_id": entry.entry_id,
            "ts": format_utc(entry.created_at),
        }
        for fid in FIELD_IDS:
            if fid in entry.fields:
                record[_SHORT_IDS[fid]] = entry.fields[fid]
        line = json.dumps(record) + "\n"
        with self._channel_path(channel_id).open("a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    # -- reads -----------------------------------------------------------

    def entries(self, channel_id: int) -> list[TelemetryEntry]:
        self.channel(channel_id)
        with self._appenders[channel_id]:
            return list(self._entries[channel_id])

    def read_feed(
        self,
        channel_id: int,
        start: Optional[datetime] = None,
        end: Optional[datetime] = None,
        limit: Optional[int] = None,
    ) -> list[TelemetryEntry]:
        """Entries with start <= created_at <= end, ascending by entry id,
        truncated to the LAST ``limit`` (None keeps everything)."""
        if start is not None and end is not None and start > end:
            raise ValueError("window start is after window end")
        if limit is not None and limit < 1:
            raise ValueError("limit must be a positive integer")
        selected = [
            e
            for e in self.entries(channel_id)
            if (start is None or e.created_at >= _as_utc(start))
            and (end is None or e.created_at <= _as_utc(end))
        ]
        if limit is not None:
            selected = selected[-limit:]
        return selected

    # -- integrity -------------------------------------------------------

    def store_hash(self) -> str:
        """Digest of every persisted byte; unchanged hash means unchanged
        store."""
        digest = hashlib.sha256()
        for path in sorted(self._root.iterdir()):
            if path.name.endswith(".tmp") or not path.is_file():
                continue
            digest.update(path.name.encode("utf-8"))
            digest.update(b"\0")
            digest.update(path.read_bytes())
            digest.update(b"\0")
        return digest.hexdigest()
