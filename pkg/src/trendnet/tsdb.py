"""Time-series storage keyed by (metric, tags), with the bus-to-store bridge.

Appends are idempotent per (key, ts): re-ingesting a bus range changes
nothing, which is what lets the bridge commit offsets lazily.
"""
from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .pipeline import COUNTER_FIELDS, IngestBus, UnknownTopic


@dataclass(frozen=True, order=True)
class SeriesKey:
    metric: str
    host_ip: str
    interface: str
    src: str


@dataclass(frozen=True)
class DataPoint:
    ts_ms: int
    value: float


class _Series:
    __slots__ = ("ts", "values")

    def __init__(self) -> None:
        self.ts: list[int] = []
        self.values: list[float] = []


class TimeSeriesStore:
    """In-memory ordered series with half-open range queries."""

    def __init__(self, on_append: Optional[Callable[[SeriesKey, DataPoint], None]] = None) -> None:
        self._series: dict[SeriesKey, _Series] = {}
        self._lock = threading.Lock()
        self._on_append = on_append

    def append(self, key: SeriesKey, point: DataPoint) -> None:
        if not key.metric:
            raise ValueError("metric must be non-empty")
        if not math.isfinite(point.value):
            raise ValueError(f"non-finite value for {key}")
        with self._lock:
            series = self._series.setdefault(key, _Series())
            i = bisect.bisect_left(series.ts, point.ts_ms)
            if i < len(series.ts) and series.ts[i] == point.ts_ms:
                series.values[i] = point.value  # idempotent re-ingest / replace
            else:
                series.ts.insert(i, point.ts_ms)
                series.values.insert(i, point.value)
        if self._on_append is not None:
            self._on_append(key, point)

    def query(self, key: SeriesKey, t0_ms: int, t1_ms: int) -> list[DataPoint]:
        """Points with t0 <= ts < t1 ascending; unknown series read as empty."""
        if t0_ms > t1_ms:
            raise ValueError("t0_ms must be <= t1_ms")
        with self._lock:
            series = self._series.get(key)
            if series is None:
                return []
            lo = bisect.bisect_left(series.ts, t0_ms)
            hi = bisect.bisect_left(series.ts, t1_ms)
            return [DataPoint(series.ts[i], series.values[i]) for i in range(lo, hi)]

    def latest(self, key: SeriesKey) -> Optional[DataPoint]:
        with self._lock:
            series = self._series.get(key)
            if series is None or not series.ts:
                return None
            return DataPoint(series.ts[-1], series.values[-1])

    def keys(self) -> list[SeriesKey]:
        with self._lock:
            return sorted(self._series)

    def count(self, key: SeriesKey) -> int:
        with self._lock:
            series = self._series.get(key)
            return len(series.ts) if series else 0


_AGG_FNS = {
    "mean": lambda vs: sum(vs) / len(vs),
    "max": max,
    "sum": sum,
}


def aggregate(points: Iterable[DataPoint], bucket_ms: int, fn: str = "mean") -> list[DataPoint]:
    """Bucket by floor(ts/bucket)*bucket and reduce; empty buckets omitted."""
    if bucket_ms <= 0:
        raise ValueError("bucket_ms must be positive")
    if fn not in _AGG_FNS:
        raise ValueError(f"unknown aggregate fn {fn!r}")
    buckets: dict[int, list[float]] = {}
    for p in points:
        buckets.setdefault((p.ts_ms // bucket_ms) * bucket_ms, []).append(p.value)
    reduce = _AGG_FNS[fn]
    return [DataPoint(ts, reduce(vs)) for ts, vs in sorted(buckets.items())]


class IngestBridge:
    """Drains bus topics into the store, one DataPoint per counter metric.

    Offsets advance only after a batch lands, so replay after a crash is
    safe (appends are idempotent). Missing topics are skipped until their
    first publish creates them.
    """

    def __init__(
        self,
        bus: IngestBus,
        store: TimeSeriesStore,
        topics: list[str],
        *,
        batch_size: int = 256,
    ) -> None:
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        self.bus = bus
        self.store = store
        self.topics = list(topics)
        self.batch_size = batch_size
        self.offsets: dict[str, int] = {t: 0 for t in self.topics}
        self.stopped = False

    def drain(self) -> int:
        """Consume everything new on every topic; returns points appended."""
        if self.stopped:
            return 0
        appended = 0
        for topic in self.topics:
            while True:
                try:
                    records, next_offset = self.bus.consume(
                        topic, self.offsets[topic], self.batch_size
                    )
                except UnknownTopic:
                    break
                if not records:
                    break
                for record in records:
                    appended += self._explode(record)
                self.offsets[topic] = next_offset
        return appended

    def _explode(self, record: dict) -> int:
        for metric in COUNTER_FIELDS:
            key = SeriesKey(
                metric=metric,
                host_ip=record["host_ip"],
                interface=record["type_instance"],
                src=record["src"],
            )
            self.store.append(key, DataPoint(record["timestamp"], float(record[metric])))
        return len(COUNTER_FIELDS)

    def stop(self) -> None:
        self.stopped = True

    def restore_offsets(self, offsets: dict[str, int]) -> None:
        for topic, offset in offsets.items():
            if topic in self.offsets:
                self.offsets[topic] = offset
