"""Utilization derivation, per-hour-of-day benchmarking, and trend detection.

Utilization is the outbound octet rate over link capacity for one sample
period, computed from consecutive stored counter points with 32-bit wrap
correction. A benchmark keeps (mean, population sigma) per clock hour; a
trend is confirmed after W consecutive samples that are both above the
high-traffic threshold and more than k sigmas from the hourly mean.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Callable, Optional

from .tsdb import DataPoint, SeriesKey, TimeSeriesStore

COUNTER_MOD = 2 ** 32  # classic 32-bit interface counter width
UTILIZATION_CEIL = 1.05
MS_PER_HOUR = 3_600_000
MS_PER_DAY = 24 * MS_PER_HOUR


class InsufficientData(Exception):
    def __init__(self, hours: list[int], link: Optional[tuple[str, str]] = None) -> None:
        self.hours = sorted(hours)
        self.link = link
        where = f" for {link[0]}/{link[1]}" if link else ""
        super().__init__(f"no utilization samples{where} at hours {self.hours}")


class ZeroInterval(Exception):
    pass


class ZeroCapacity(Exception):
    pass


class OutOfOrderSample(Exception):
    pass


@dataclass
class AnalyticsConfig:
    threshold_fraction: float = 0.7
    deviation_multiplier: float = 2.0
    confirm_window: int = 3
    sample_period_ms: int = MS_PER_HOUR
    benchmark_days: int = 3
    benchmark_reset_period_ms: int = 7 * MS_PER_DAY
    sigma_floor: float = 0.01

    def validate(self) -> list[str]:
        problems = []
        if not 0 < self.threshold_fraction <= 1:
            problems.append("threshold_fraction must be in (0, 1]")
        if self.deviation_multiplier <= 0:
            problems.append("deviation_multiplier must be positive")
        if self.confirm_window <= 0:
            problems.append("confirm_window must be positive")
        if self.sample_period_ms <= 0:
            problems.append("sample_period_ms must be positive")
        if self.benchmark_days <= 0:
            problems.append("benchmark_days must be positive")
        if self.benchmark_reset_period_ms <= 0:
            problems.append("benchmark_reset_period_ms must be positive")
        if self.sigma_floor < 0:
            problems.append("sigma_floor must be non-negative")
        return problems


@dataclass(frozen=True)
class LinkRef:
    """A monitored link: where its counters live and how fast it is."""

    host_ip: str
    interface: str
    src: str  # which collection surface feeds the series
    capacity_bps: int

    def series_key(self, metric: str = "outOctets") -> SeriesKey:
        return SeriesKey(metric=metric, host_ip=self.host_ip, interface=self.interface, src=self.src)


@dataclass
class Benchmark:
    id: str
    link: tuple[str, str]  # (host_ip, interface)
    created_at_ms: int
    capacity_bps: int
    threshold: float
    hourly_mean: list[float]  # 24 utilization fractions
    hourly_sigma: list[float]  # 24 population standard deviations

    def export(self) -> dict:
        return {
            "id": self.id,
            "link": {"host_ip": self.link[0], "interface": self.link[1]},
            "created_at": self.created_at_ms,
            "capacity_bps": self.capacity_bps,
            "threshold": self.threshold,
            "hours": [
                {"h": h, "mean": self.hourly_mean[h], "sigma": self.hourly_sigma[h]}
                for h in range(24)
            ],
        }


@dataclass
class TrendEvent:
    id: str
    link: tuple[str, str]
    started_at_ms: int
    confirmed_at_ms: int
    peak_utilization: float
    benchmark_id: str
    ended_at_ms: Optional[int] = None

    def export(self) -> dict:
        return {
            "id": self.id,
            "link": {"host_ip": self.link[0], "interface": self.link[1]},
            "started_at_ms": self.started_at_ms,
            "confirmed_at_ms": self.confirmed_at_ms,
            "ended_at_ms": self.ended_at_ms,
            "peak_utilization": self.peak_utilization,
            "benchmark_id": self.benchmark_id,
        }


@dataclass(frozen=True)
class TrendTransition:
    kind: str  # "confirmed" | "ended"
    event: TrendEvent


@dataclass
class TrendState:
    link: tuple[str, str]
    consecutive_flags: int = 0
    active: bool = False
    current_event: Optional[TrendEvent] = None
    last_sample_ms: Optional[int] = None
    pending_started_ms: Optional[int] = None
    pending_peak: float = 0.0


def counter_delta(prev: int, curr: int) -> int:
    """Difference of two 32-bit wrapping counter readings."""
    if not (0 <= prev < COUNTER_MOD and 0 <= curr < COUNTER_MOD):
        raise ValueError("counter values must be in [0, 2^32)")
    if curr >= prev:
        return curr - prev
    return curr - prev + COUNTER_MOD


def compute_utilization(delta_octets: int, dt_ms: int, capacity_bps: int) -> float:
    """Octet rate over capacity, clamped to [0, 1.05]."""
    if dt_ms <= 0:
        raise ZeroInterval(str(dt_ms))
    if capacity_bps <= 0:
        raise ZeroCapacity(str(capacity_bps))
    util = delta_octets * 8.0 / (dt_ms / 1000.0) / capacity_bps
    return min(max(util, 0.0), UTILIZATION_CEIL)


def utilization_series(points: list[DataPoint], capacity_bps: int) -> list[tuple[int, float]]:
    """Per-interval utilization from consecutive counter points.

    Each value is stamped with the interval's start timestamp, so it lands
    in the hour-of-day bucket the traffic actually flowed in.
    """
    out = []
    for prev, curr in zip(points, points[1:]):
        delta = counter_delta(int(prev.value), int(curr.value))
        out.append((prev.ts_ms, compute_utilization(delta, curr.ts_ms - prev.ts_ms, capacity_bps)))
    return out


def hour_of_day(ts_ms: int) -> int:
    return (ts_ms // MS_PER_HOUR) % 24


def build_benchmark(
    store: TimeSeriesStore,
    link: LinkRef,
    cfg: AnalyticsConfig,
    window_end_ms: int,
    *,
    benchmark_id: str = "bm-0",
) -> Benchmark:
    """Profile a link's outbound utilization per hour-of-day.

    The window is the benchmark_days ending at window_end (floored to a
    whole hour). Hours of day with no derivable sample fail the build,
    named in the error.
    """
    window_end = (window_end_ms // MS_PER_HOUR) * MS_PER_HOUR
    window_start = window_end - cfg.benchmark_days * MS_PER_DAY
    # +1ms so the point sitting exactly on the window end can close the
    # last interval; samples themselves are filtered to [start, end).
    points = store.query(link.series_key("outOctets"), window_start, window_end + 1)
    samples = [
        (ts, util)
        for ts, util in utilization_series(points, link.capacity_bps)
        if window_start <= ts < window_end
    ]
    by_hour: dict[int, list[float]] = {h: [] for h in range(24)}
    for ts, util in samples:
        by_hour[hour_of_day(ts)].append(util)
    empty = [h for h in range(24) if not by_hour[h]]
    if empty:
        raise InsufficientData(empty, link=(link.host_ip, link.interface))
    return Benchmark(
        id=benchmark_id,
        link=(link.host_ip, link.interface),
        created_at_ms=window_end,
        capacity_bps=link.capacity_bps,
        threshold=cfg.threshold_fraction,
        hourly_mean=[statistics.fmean(by_hour[h]) for h in range(24)],
        hourly_sigma=[statistics.pstdev(by_hour[h]) for h in range(24)],
    )


def evaluate_sample(bm: Benchmark, cfg: AnalyticsConfig, hour: int, util: float) -> bool:
    """High-traffic flag: above threshold AND deviating beyond k sigmas."""
    if not 0 <= hour <= 23:
        raise ValueError(f"hour {hour} out of range")
    if util < 0:
        raise ValueError("utilization must be non-negative")
    if util <= bm.threshold:
        return False
    band = cfg.deviation_multiplier * max(bm.hourly_sigma[hour], cfg.sigma_floor)
    return abs(util - bm.hourly_mean[hour]) > band


def advance_trend(
    state: TrendState,
    flagged: bool,
    now_ms: int,
    util: float,
    *,
    cfg: AnalyticsConfig,
    event_id: Callable[[], str],
    benchmark_id: str,
) -> Optional[TrendTransition]:
    """One sample-period turn of the per-link trend state machine.

    Returns the emitted transition, if any; mutates state in place.
    """
    if state.last_sample_ms is not None and now_ms <= state.last_sample_ms:
        raise OutOfOrderSample(f"{now_ms} <= {state.last_sample_ms}")
    state.last_sample_ms = now_ms

    if state.active:
        event = state.current_event
        if flagged:
            event.peak_utilization = max(event.peak_utilization, util)
            return None
        event.ended_at_ms = now_ms
        state.active = False
        state.current_event = None
        state.consecutive_flags = 0
        state.pending_started_ms = None
        state.pending_peak = 0.0
        return TrendTransition("ended", event)

    if not flagged:
        state.consecutive_flags = 0
        state.pending_started_ms = None
        state.pending_peak = 0.0
        return None

    if state.consecutive_flags == 0:
        state.pending_started_ms = now_ms
        state.pending_peak = util
    else:
        state.pending_peak = max(state.pending_peak, util)
    state.consecutive_flags += 1
    if state.consecutive_flags < cfg.confirm_window:
        return None

    event = TrendEvent(
        id=event_id(),
        link=state.link,
        started_at_ms=state.pending_started_ms,
        confirmed_at_ms=now_ms,
        peak_utilization=state.pending_peak,
        benchmark_id=benchmark_id,
    )
    state.active = True
    state.current_event = event
    return TrendTransition("confirmed", event)


def should_reset(bm: Benchmark, now_ms: int, cfg: AnalyticsConfig) -> bool:
    return now_ms - bm.created_at_ms >= cfg.benchmark_reset_period_ms
