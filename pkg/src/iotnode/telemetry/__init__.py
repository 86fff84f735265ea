"""Keyed telemetry ingestion and read service: append-only channel store,
exact-arithmetic aggregation, HTTP endpoints, and the outbound client."""

from .aggregate import (
    AggregateSummary,
    DailyStat,
    EmptyWindowError,
    daily_aggregate,
    round_half_up,
    summarize,
)
from .client import PushError, TelemetryClient
from .server import TelemetryServer
from .store import (
    DEFAULT_MIN_INTERVAL_S,
    DEFAULT_WRITE_KEY,
    FIELD_IDS,
    AuthError,
    Channel,
    RateLimitedError,
    TelemetryEntry,
    TelemetryError,
    TelemetryStore,
    UnknownChannelError,
)

__all__ = [
    "AggregateSummary",
    "DailyStat",
    "EmptyWindowError",
    "daily_aggregate",
    "round_half_up",
    "summarize",
    "DEFAULT_MIN_INTERVAL_S",
    "DEFAULT_WRITE_KEY",
    "FIELD_IDS",
    "AuthError",
    "Channel",
    "RateLimitedError",
    "TelemetryEntry",
    "TelemetryError",
    "TelemetryStore",
    "UnknownChannelError",
    "PushError",
    "TelemetryClient",
    "TelemetryServer",
]
