"""HTTP surface for the telemetry store.

Endpoints:

    GET /update?api_key=<key>&field1=<v>...[&created_at=<iso>]
        Body is the new entry id as decimal text. Auth failures and rate
        limiting answer HTTP 200 with body "0" (ingestion-service
        compatibility); the X-Reject-Reason header says which it was.
    GET /channels/<id>/feeds?start=<iso>&end=<iso>&results=<n>
        Channel metadata plus the matching entries.
    GET /channels/<id>/summary?field=<fid>
        Whole-window rollup for one field.

Every response carries `Access-Control-Allow-Origin: *` so browser pages
served from another origin can read the data.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlsplit

from ..clock import WallClock, format_utc, parse_utc
from .aggregate import EmptyWindowError, summarize
from .store import (
    FIELD_IDS,
    AuthError,
    RateLimitedError,
    TelemetryStore,
    UnknownChannelError,
)

log = logging.getLogger(__name__)


class _BadRequest(Exception):
    pass


class TelemetryHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    # Bursts of short-lived clients overflow the default backlog of 5 and
    # stall connects behind kernel SYN retries.
    request_queue_size = 128

    def __init__(self, address, store: TelemetryStore, clock=None):
        super().__init__(address, _Handler)
        self.store = store
        self.clock = clock if clock is not None else WallClock()


class _Handler(BaseHTTPRequestHandler):
    server: TelemetryHTTPServer
    protocol_version = "HTTP/1.1"

    def log_message(self, format: str, *args) -> None:
        log.debug("%s " + format, self.address_string(), *args)

    def _send(
        self,
        body: bytes,
        status: int = 200,
        *,
        content_type: str = "application/json",
        extra: tuple[tuple[str, str], ...] = (),
    ) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        for name, value in extra:
            self.send_header(name, value)
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, doc: dict, status: int = 200) -> None:
        self._send(json.dumps(doc).encode("utf-8"), status)

    def _send_text(
        self, text: str, status: int = 200, extra: tuple[tuple[str, str], ...] = ()
    ) -> None:
        self._send(
            text.encode("utf-8"), status, content_type="text/plain", extra=extra
        )

    def do_GET(self) -> None:  # noqa: N802 (fixed by the HTTP framework)
        url = urlsplit(self.path)
        query = parse_qs(url.query)
        try:
            if url.path == "/update":
                self._handle_update(query)
                return
            segments = url.path.strip("/").split("/")
            if len(segments) == 3 and segments[0] == "channels":
                if not segments[1].isdigit():
                    raise UnknownChannelError(f"bad channel id {segments[1]!r}")
                channel_id = int(segments[1])
                if segments[2] == "feeds":
                    self._handle_feeds(channel_id, query)
                    return
                if segments[2] == "summary":
                    self._handle_summary(channel_id, query)
                    return
            self._send_json({"error": f"no route for {url.path}"}, 404)
        except UnknownChannelError as exc:
            self._send_json({"error": str(exc)}, 404)
        except _BadRequest as exc:
            self._send_json({"error": str(exc)}, 400)

    def do_POST(self) -> None:  # noqa: N802
        self._send_json({"error": "only GET is supported"}, 405)

    do_PUT = do_POST
    do_DELETE = do_POST

    # -- endpoint bodies -------------------------------------------------

    def _first(self, query: dict, name: str) -> Optional[str]:
        values = query.get(name)
        return values[0] if values else None

    def _parse_ts(self, query: dict, name: str):
        raw = self._first(query, name)
        if raw is None:
            return None
        try:
            return parse_utc(raw)
        except ValueError as exc:
            raise _BadRequest(f"bad {name} timestamp: {exc}") from exc

    def _handle_update(self, query: dict) -> None:
        key = self._first(query, "api_key") or ""
        fields: dict[str, int] = {}
        for fid in FIELD_IDS:
            raw = self._first(query, fid)
            if raw is None:
                continue
            try:
                fields[fid] = int(raw)
            except ValueError as exc:
                raise _BadRequest(f"{fid} must be an integer") from exc
        created_at = self._parse_ts(query, "created_at")
        if not fields:
            raise _BadRequest("update carries no fields")
        try:
            entry_id = self.server.store.write_update(
                key, fields, self.server.clock.now(), created_at=created_at
            )
        except AuthError:
            self._send_text("0", extra=(("X-Reject-Reason", "auth"),))
            return
        except RateLimitedError:
            self._send_text("0", extra=(("X-Reject-Reason", "rate-limit"),))
            return
        except ValueError as exc:
            raise _BadRequest(str(exc)) from exc
        self._send_text(str(entry_id))

    def _handle_feeds(self, channel_id: int, query: dict) -> None:
        start = self._parse_ts(query, "start")
        end = self._parse_ts(query, "end")
        raw_results = self._first(query, "results")
        limit = None
        if raw_results is not None:
            try:
                limit = int(raw_results)
            except ValueError as exc:
                raise _BadRequest("results must be an integer") from exc
        channel = self.server.store.channel(channel_id)
        try:
            entries = self.server.store.read_feed(channel_id, start, end, limit)
        except ValueError as exc:
            raise _BadRequest(str(exc)) from exc
        meta: dict[str, object] = {
            "id": channel.channel_id,
            "created_at": format_utc(channel.created_at),
        }
        for fid in FIELD_IDS:
            label = channel.field_names.get(fid)
            if label is not None:
                meta[fid] = label
        feeds = []
        for entry in entries:
            doc: dict[str, object] = {
                "created_at": format_utc(entry.created_at),
                "entry_id": entry.entry_id,
            }
            for fid in FIELD_IDS:
                if fid in entry.fields:
                    doc[fid] = entry.fields[fid]
            feeds.append(doc)
        self._send_json({"channel": meta, "feeds": feeds})

    def _handle_summary(self, channel_id: int, query: dict) -> None:
        field_id = self._first(query, "field")
        if field_id is None:
            raise _BadRequest("field parameter is required")
        if field_id not in FIELD_IDS:
            raise _BadRequest(f"unknown field id {field_id!r}")
        entries = self.server.store.entries(channel_id)
        base: dict[str, object] = {"channel": channel_id, "field": field_id}
        try:
            summary = summarize(entries, field_id)
        except EmptyWindowError:
            base.update(
                {
                    "mean_rounded": None,
                    "min": None,
                    "max": None,
                    "count": 0,
                    "window": None,
                }
            )
            self._send_json(base)
            return
        base.update(
            {
                "mean_rounded": summary.mean_rounded,
                "min": summary.min,
                "max": summary.max,
                "count": summary.count,
                "window": {
                    "start": format_utc(summary.start),
                    "end": format_utc(summary.end),
                },
            }
        )
        self._send_json(base)


class TelemetryServer:
    """Lifecycle wrapper: bind, serve on a background thread, stop."""

    def __init__(
        self,
        store: TelemetryStore,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        clock=None,
    ) -> None:
        self._httpd = TelemetryHTTPServer((host, port), store, clock)
        self._thread: Optional[threading.Thread] = None

    @property
    def host(self) -> str:
        return self._httpd.server_address[0]

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "TelemetryServer":
        if self._thread is None:
            self._thread = threading.Thread(
                target=self._httpd.serve_forever,
                name="telemetry-http",
                daemon=True,
            )
            self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def __enter__(self) -> "TelemetryServer":
        return self.start()

    def __exit__(self, *exc_info: object) -> None:
        self.stop()
