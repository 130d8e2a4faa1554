"""File persistence for the service: append-only journals plus a state snapshot.

Journal layout inside the data directory:
  points.log      one line per stored point: "metric host_ip interface src ts_ms value"
  bus.log         one JSON line per published record: {"topic", "offset", "record"}
  trends.log      one JSON line per trend transition (full export, last-by-id wins)
  decisions.log   one JSON line per decision transition (full export, last-by-id wins)
  benchmarks.log  one JSON line per benchmark build (full export)
  state.json      atomic snapshot of everything not re-derivable from journals

A corrupt trailing journal line (torn write) is truncated away at startup
and logged; anything after it on later lines is dropped with it.
"""
from __future__ import annotations

import json
import logging
import os
from typing import Callable, Optional

from .tsdb import DataPoint, SeriesKey

logger = logging.getLogger(__name__)

POINTS_LOG = "points.log"
BUS_LOG = "bus.log"
TRENDS_LOG = "trends.log"
DECISIONS_LOG = "decisions.log"
BENCHMARKS_LOG = "benchmarks.log"
STATE_FILE = "state.json"


class PersistenceError(Exception):
    def __init__(self, path: str, cause: Exception) -> None:
        self.path = path
        super().__init__(f"{path}: {cause}")


def format_point_line(key: SeriesKey, point: DataPoint) -> str:
    return f"{key.metric} {key.host_ip} {key.interface} {key.src} {point.ts_ms} {point.value!r}\n"


def parse_point_line(line: str) -> tuple[SeriesKey, DataPoint]:
    metric, host_ip, interface, src, ts_ms, value = line.split(" ")
    return (
        SeriesKey(metric=metric, host_ip=host_ip, interface=interface, src=src),
        DataPoint(ts_ms=int(ts_ms), value=float(value)),
    )


class JournalWriter:
    """Append-only text journal, flushed per write."""

    def __init__(self, path: str) -> None:
        self.path = path
        try:
            self._fh = open(path, "a", encoding="utf-8")
        except OSError as exc:
            raise PersistenceError(path, exc) from None

    def write_line(self, line: str) -> None:
        self._fh.write(line)
        self._fh.flush()

    def write_json(self, obj: dict) -> None:
        self.write_line(json.dumps(obj, separators=(",", ":")) + "\n")

    def close(self) -> None:
        self._fh.close()


def _read_lines_truncating(path: str, parse: Callable[[str], object]) -> list:
    """Parse journal lines; truncate the file at the first bad line."""
    if not os.path.exists(path):
        return []
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise PersistenceError(path, exc) from None
    parsed = []
    pos = 0
    while pos < len(raw):
        nl = raw.find(b"\n", pos)
        end = len(raw) if nl == -1 else nl
        chunk = raw[pos:end]
        if chunk:
            try:
                parsed.append(parse(chunk.decode("utf-8")))
            except Exception:
                logger.warning("truncating %s at corrupt line (byte %d)", path, pos)
                with open(path, "rb+") as fh:
                    fh.truncate(pos)
                return parsed
        pos = end + 1
    return parsed


def load_points(path: str) -> list[tuple[SeriesKey, DataPoint]]:
    return _read_lines_truncating(path, parse_point_line)


def load_json_lines(path: str) -> list[dict]:
    return _read_lines_truncating(path, json.loads)


def write_state(path: str, state: dict) -> None:
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(state, fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        raise PersistenceError(path, exc) from None


def read_state(path: str) -> Optional[dict]:
    if not os.path.exists(path):
        return None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise PersistenceError(path, exc) from None
    except json.JSONDecodeError as exc:
        raise PersistenceError(path, exc) from None


class DataDir:
    """Open journals over one data directory."""

    def __init__(self, root: str) -> None:
        self.root = root
        try:
            os.makedirs(root, exist_ok=True)
        except OSError as exc:
            raise PersistenceError(root, exc) from None
        self.points = JournalWriter(os.path.join(root, POINTS_LOG))
        self.bus = JournalWriter(os.path.join(root, BUS_LOG))
        self.trends = JournalWriter(os.path.join(root, TRENDS_LOG))
        self.decisions = JournalWriter(os.path.join(root, DECISIONS_LOG))
        self.benchmarks = JournalWriter(os.path.join(root, BENCHMARKS_LOG))

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    def state_path(self) -> str:
        return self.path(STATE_FILE)

    def close(self) -> None:
        for journal in (self.points, self.bus, self.trends, self.decisions, self.benchmarks):
            journal.close()
