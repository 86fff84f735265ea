"""Outbound HTTP client the gateway uses to push readings upstream."""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from datetime import datetime
from typing import Optional
from urllib.parse import urlencode

from ..clock import format_utc
from ..device import SensorReading
from .store import AuthError, TelemetryError


class PushError(TelemetryError):
    """Transport-level failure: the service could not be reached or gave a
    non-200 answer. Retryable, unlike `AuthError`."""


class TelemetryClient:
    """Thin wrapper over the /update and /channels endpoints.

    `push` distinguishes three outcomes: an entry id (stored), None
    (rate-limited, drop and move on), and raised errors (`AuthError` is
    fatal configuration, `PushError` is a retryable transport fault).
    """

    def __init__(self, base_url: str, api_key: str, *, timeout: float = 5.0):
        self._base = base_url.rstrip("/")
        self._api_key = api_key
        self._timeout = timeout

    def _get(self, path_and_query: str) -> tuple[int, dict, bytes]:
        url = f"{self._base}{path_and_query}"
        try:
            with urllib.request.urlopen(url, timeout=self._timeout) as resp:
                return resp.status, dict(resp.headers), resp.read()
        except urllib.error.HTTPError as exc:
            body = exc.read()
            raise PushError(
                f"GET {path_and_query} -> HTTP {exc.code}: {body[:200]!r}"
            ) from exc
        except (urllib.error.URLError, OSError) as exc:
            raise PushError(f"GET {path_and_query} failed: {exc}") from exc

    def push(
        self, reading: SensorReading, at: Optional[datetime] = None
    ) -> Optional[int]:
        """Send one reading; returns the entry id, or None when the service
        rate-limited the write."""
        params = {
            "api_key": self._api_key,
            "field1": reading.temperature_c,
            "field2": reading.humidity_pct,
        }
        if at is not None:
            params["created_at"] = format_utc(at)
        status, headers, body = self._get(f"/update?{urlencode(params)}")
        if status != 200:
            raise PushError(f"/update answered HTTP {status}")
        text = body.decode("utf-8", "replace").strip()
        if text == "0":
            reason = headers.get("X-Reject-Reason", "")
            if reason == "auth":
                raise AuthError("telemetry service rejected the write key")
            return None
        try:
            return int(text)
        except ValueError as exc:
            raise PushError(f"unexpected /update body {text!r}") from exc

    def read_feed(
        self,
        channel_id: int,
        start: Optional[datetime] = None,
        end: Optional[datetime] = None,
        results: Optional[int] = None,
    ) -> dict:
        params = {}
        if start is not None:
            params["start"] = format_utc(start)
        if end is not None:
            params["end"] = format_utc(end)
        if results is not None:
            params["results"] = results
        query = f"?{urlencode(params)}" if params else ""
        _, _, body = self._get(f"/channels/{channel_id}/feeds{query}")
        return json.loads(body)

    def read_summary(self, channel_id: int, field: str) -> dict:
        _, _, body = self._get(f"/channels/{channel_id}/summary?field={field}")
        return json.loads(body)
