"""Raw-sample filtering, canonical envelope encoding, and the ingest bus.

The envelope key set and formatting are a wire contract shared with the
journal files and the HTTP API; do not reorder or rename fields.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Optional

from .collector import COLLECTD_SRC, SDN_SRC, RawSample

COUNTER_FIELDS = ("inOctets", "inPkts", "inDiscards", "outOctets", "outPkts", "outDiscards")
RAWDATA_FIELDS = ("inPkts", "outPkts", "inOctets", "outOctets")

PLUGIN_BY_SRC = {COLLECTD_SRC: "snmp", SDN_SRC: "openflow"}


class MalformedSample(Exception):
    pass


class BusClosed(Exception):
    pass


class UnknownTopic(Exception):
    pass


@dataclass(frozen=True)
class MetricAllowList:
    names: frozenset[str]

    def __post_init__(self) -> None:
        if not self.names:
            raise ValueError("allow-list must not be empty")
        unknown = self.names - set(COUNTER_FIELDS)
        if unknown:
            raise ValueError(f"unknown counter fields: {sorted(unknown)}")

    @classmethod
    def of(cls, *names: str) -> "MetricAllowList":
        return cls(frozenset(names))


DEFAULT_ALLOW = MetricAllowList(frozenset(COUNTER_FIELDS))


@dataclass(frozen=True)
class FilteredSample:
    src: str
    host_ip: str
    interface: str
    timestamp_ms: int
    counters: dict[str, int]  # allow-listed fields only


def filter_metrics(sample, allow: MetricAllowList = DEFAULT_ALLOW) -> FilteredSample:
    """Keep identity fields and allow-listed counters; idempotent."""
    if isinstance(sample, FilteredSample):
        counters = {k: v for k, v in sample.counters.items() if k in allow.names}
    elif isinstance(sample, RawSample):
        counters = {k: v for k, v in sample.counters.as_dict().items() if k in allow.names}
    else:
        raise MalformedSample(f"cannot filter {type(sample).__name__}")
    return FilteredSample(
        src=sample.src,
        host_ip=sample.host_ip,
        interface=sample.interface,
        timestamp_ms=sample.timestamp_ms,
        counters=counters,
    )


def iso_timestamp(ts_ms: int) -> str:
    dt = datetime.fromtimestamp(ts_ms // 1000, tz=timezone.utc)
    return f"{dt:%Y-%m-%dT%H:%M:%S}.{ts_ms % 1000:03d}Z"


def parse_iso_timestamp(text: str) -> int:
    dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def encode(sample: FilteredSample) -> dict:
    """Normalize a filtered sample into the canonical telemetry envelope.

    Counters dropped by the allow-list appear as 0 in the envelope and are
    omitted from rawdata. rawdata keeps the legacy collector formatting
    (spaces around colons) so stored records match the upstream shape
    byte for byte.
    """
    for name, value in (
        ("src", sample.src),
        ("host_ip", sample.host_ip),
        ("interface", sample.interface),
    ):
        if not value:
            raise MalformedSample(f"missing identity field {name}")
    if sample.src not in PLUGIN_BY_SRC:
        raise MalformedSample(f"unknown src {sample.src!r}")
    if sample.timestamp_ms is None:
        raise MalformedSample("missing timestamp")

    rawdata: dict[str, object] = {"interface": sample.interface}
    for name in RAWDATA_FIELDS:
        if name in sample.counters:
            rawdata[name] = sample.counters[name]

    record = {"@timestamp": iso_timestamp(sample.timestamp_ms), "plugin": PLUGIN_BY_SRC[sample.src]}
    record["collectd_type"] = "if_cols"
    record["type_instance"] = sample.interface
    for name in COUNTER_FIELDS:
        record[name] = sample.counters.get(name, 0)
    record["@version"] = "1"
    record["src"] = sample.src
    record["host_ip"] = sample.host_ip
    record["rawdata"] = json.dumps(rawdata, separators=(", ", " : "))
    record["timestamp"] = sample.timestamp_ms
    return record


def decode(record: dict) -> FilteredSample:
    """Inverse of encode for the retained fields (dropped counters read as 0)."""
    try:
        return FilteredSample(
            src=record["src"],
            host_ip=record["host_ip"],
            interface=record["type_instance"],
            timestamp_ms=record["timestamp"],
            counters={name: record[name] for name in COUNTER_FIELDS},
        )
    except KeyError as exc:
        raise MalformedSample(f"envelope missing key {exc.args[0]!r}") from None


class IngestBus:
    """Append-only, offset-addressed record log per topic.

    Offsets are contiguous from 0; records are immutable once appended.
    Consumers track their own offsets (at-least-once replay is the point).
    """

    def __init__(self, on_publish: Optional[Callable[[str, int, dict], None]] = None) -> None:
        self._topics: dict[str, list[dict]] = {}
        self._closed = False
        self._lock = threading.Lock()
        self._on_publish = on_publish

    def publish(self, topic: str, record: dict) -> int:
        if not topic:
            raise ValueError("topic name must be non-empty")
        with self._lock:
            if self._closed:
                raise BusClosed(topic)
            log = self._topics.setdefault(topic, [])
            offset = len(log)
            log.append(record)
        if self._on_publish is not None:
            self._on_publish(topic, offset, record)
        return offset

    def consume(self, topic: str, from_offset: int, max_records: int) -> tuple[list[dict], int]:
        if from_offset < 0:
            raise ValueError("from_offset must be >= 0")
        if max_records <= 0:
            raise ValueError("max_records must be positive")
        with self._lock:
            if topic not in self._topics:
                raise UnknownTopic(topic)
            chunk = self._topics[topic][from_offset : from_offset + max_records]
        return list(chunk), from_offset + len(chunk)

    def length(self, topic: str) -> int:
        with self._lock:
            if topic not in self._topics:
                raise UnknownTopic(topic)
            return len(self._topics[topic])

    def topics(self) -> list[str]:
        with self._lock:
            return sorted(self._topics)

    def close(self) -> None:
        with self._lock:
            self._closed = True

    def restore(self, topic: str, records: list[dict]) -> None:
        """Load a journaled topic log verbatim (startup only)."""
        with self._lock:
            self._topics[topic] = list(records)
