"""Periodic polling of the simulator's two telemetry surfaces.

Traditional devices are read one by one (the collectd/SNMP role), SDN
switch ports in one sweep (the controller REST role). The poller fires on
virtual-clock period boundaries, so scenarios stay deterministic.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Callable, Optional

from .netsim import CounterSet, SimNetwork, VirtualScheduler, TRADITIONAL

logger = logging.getLogger(__name__)

COLLECTD_SRC = "collectd"
SDN_SRC = "sdn"


class SinkClosed(Exception):
    """Raised by a sink that can no longer accept samples."""


@dataclass(frozen=True)
class RawSample:
    src: str  # COLLECTD_SRC | SDN_SRC
    host_ip: str
    interface: str
    counters: CounterSet
    timestamp_ms: int


@dataclass(frozen=True)
class PollSchedule:
    period_ms: int
    jitter_ms: int = 0

    def __post_init__(self) -> None:
        if self.period_ms <= 0:
            raise ValueError("period_ms must be positive")
        if self.jitter_ms < 0:
            raise ValueError("jitter_ms must be non-negative")


def poll_traditional(net: SimNetwork, device_id: str) -> list[RawSample]:
    """One sample per interface of a traditional device, src tagged collectd."""
    return [
        RawSample(COLLECTD_SRC, s.host_ip, s.interface, s.counters, s.timestamp_ms)
        for s in net.read_counters(device_id)
    ]


def poll_sdn(net: SimNetwork) -> list[RawSample]:
    """One sample per (switch, port) across the whole SDN domain."""
    return [
        RawSample(SDN_SRC, s.host_ip, s.interface, s.counters, s.timestamp_ms)
        for s in net.read_flow_stats()
    ]


def poll_round(net: SimNetwork) -> list[RawSample]:
    """Both surfaces in the documented order: devices by id, interfaces by name."""
    samples: list[RawSample] = []
    for dev_id in sorted(net.devices):
        if net.devices[dev_id].kind == TRADITIONAL:
            samples.extend(poll_traditional(net, dev_id))
    samples.extend(poll_sdn(net))
    return samples


class Poller:
    """Virtual-clock-driven poll task; stoppable; lossless toward the sink.

    The sink may raise SinkClosed to terminate the task; the error is kept
    on the handle for the supervisor.
    """

    def __init__(
        self,
        net: SimNetwork,
        schedule: PollSchedule,
        sink: Callable[[RawSample], None],
        scheduler: VirtualScheduler,
        *,
        start_ms: Optional[int] = None,
        on_round: Optional[Callable[[int], None]] = None,
        rng_seed: int = 0,
    ) -> None:
        self.net = net
        self.schedule = schedule
        self.sink = sink
        self.scheduler = scheduler
        self.on_round = on_round
        self.stopped = False
        self.error: Optional[Exception] = None
        self.rounds_fired = 0
        self._rng = random.Random(f"poller:{rng_seed}")
        base = net.clock.now_ms if start_ms is None else start_ms
        self.next_boundary_ms = base + schedule.period_ms
        self._entry = scheduler.schedule(self._fire_at(), self._fire, tag="poll-round")

    def _fire_at(self) -> int:
        if self.schedule.jitter_ms:
            return self.next_boundary_ms + self._rng.randint(0, self.schedule.jitter_ms)
        return self.next_boundary_ms

    def _fire(self, at_ms: int) -> None:
        if self.stopped:
            return
        boundary = self.next_boundary_ms
        try:
            for sample in poll_round(self.net):
                self.sink(sample)
        except SinkClosed as exc:
            self.error = exc
            self.stopped = True
            logger.warning("poller stopped: sink closed (%s)", exc)
            return
        self.rounds_fired += 1
        if self.on_round is not None:
            self.on_round(boundary)
        self.next_boundary_ms = boundary + self.schedule.period_ms
        self._entry = self.scheduler.schedule(self._fire_at(), self._fire, tag="poll-round")

    def stop(self) -> None:
        self.stopped = True
        self.scheduler.cancel(self._entry)

    def restore_next_boundary(self, next_boundary_ms: int) -> None:
        """Re-arm after a restart at a journaled boundary."""
        self.scheduler.cancel(self._entry)
        self.next_boundary_ms = next_boundary_ms
        self._entry = self.scheduler.schedule(self._fire_at(), self._fire, tag="poll-round")


def run_poller(
    net: SimNetwork,
    schedule: PollSchedule,
    sink: Callable[[RawSample], None],
    scheduler: VirtualScheduler,
    **kwargs,
) -> Poller:
    return Poller(net, schedule, sink, scheduler, **kwargs)
