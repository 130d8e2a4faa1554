"""In-process simulator of a hybrid test network.

Two independent device domains live in one topology: traditional routers
that forward by per-prefix local preference (highest wins), and SDN
switches that forward by priority-ordered flow tables. A seeded diurnal
traffic generator drives 32-bit wrapping interface counters under a
virtual clock, so multi-day scenarios run in seconds of wall time.
"""
from __future__ import annotations

import heapq
import ipaddress
import math
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

COUNTER_MOD = 2 ** 32
PACKET_BYTES = 1000
DEFAULT_LOCAL_PREFERENCE = 100
BASELINE_FLOW_PRIORITY = 100
# Subnet attachment (LAN) ports are not part of any LinkSpec; they get a
# fixed high capacity so inter-device links stay the bottleneck.
DEFAULT_LAN_CAPACITY_BPS = 1_000_000_000
MS_PER_HOUR = 3_600_000

TRADITIONAL = "traditional"
SDN_SWITCH = "sdn-switch"


class SimError(Exception):
    """Base class for simulator domain errors."""


class DuplicateDeviceId(SimError):
    pass


class DanglingEndpoint(SimError):
    pass


class NonPositiveCapacity(SimError):
    pass


class SubnetUnattached(SimError):
    pass


class NoPath(SimError):
    pass


class UnknownDevice(SimError):
    pass


class WrongDeviceKind(SimError):
    pass


class UnknownRouter(SimError):
    pass


class UnknownInterface(SimError):
    pass


class UnknownSwitch(SimError):
    pass


class UnknownPort(SimError):
    pass


class DuplicateCookie(SimError):
    pass


class UnknownCookie(SimError):
    pass


def hour_of_day(ts_ms: int) -> int:
    return (ts_ms // MS_PER_HOUR) % 24


def canonical_prefix(prefix: str) -> str:
    return str(ipaddress.ip_network(prefix))


# ---------------------------------------------------------------------------
# Topology and traffic description types


@dataclass(frozen=True)
class DeviceSpec:
    id: str
    kind: str  # TRADITIONAL or SDN_SWITCH
    mgmt_ip: str


@dataclass(frozen=True)
class LinkSpec:
    endpoint_a: tuple[str, str]  # (device id, interface name)
    endpoint_b: tuple[str, str]
    capacity_bps: int


@dataclass(frozen=True)
class TopologySpec:
    devices: tuple[DeviceSpec, ...]
    links: tuple[LinkSpec, ...]
    subnets: dict[str, tuple[str, str]]  # CIDR -> (device id, interface name)


@dataclass(frozen=True)
class Demand:
    src_prefix: str
    dst_prefix: str
    hourly_mean_bps: tuple[float, ...]  # exactly 24 entries
    noise_sigma_bps: float = 0.0


@dataclass(frozen=True)
class TrafficProfile:
    demands: tuple[Demand, ...]
    rng_seed: int = 0


@dataclass(frozen=True)
class RouteMapDirective:
    router_id: str
    prefix: str
    egress_interface: str
    local_preference: int
    mode: str  # "set" | "clear"


@dataclass(frozen=True)
class FlowEntry:
    switch_id: str
    cookie: int
    priority: int
    match_dst_prefix: str
    action_out_port: str
    hard_timeout_s: Optional[float] = None


# ---------------------------------------------------------------------------
# Runtime state


# Counter field names mirror the wire schema (camelCase is the contract).
COUNTER_FIELDS = ("inOctets", "inPkts", "inDiscards", "outOctets", "outPkts", "outDiscards")


@dataclass
class CounterSet:
    """Six 32-bit wrapping monotone counters of one interface."""

    inOctets: int = 0
    outOctets: int = 0
    inPkts: int = 0
    outPkts: int = 0
    inDiscards: int = 0
    outDiscards: int = 0

    def add(self, name: str, amount: int) -> None:
        if amount < 0:
            raise ValueError("counter increments are non-negative")
        setattr(self, name, (getattr(self, name) + amount) % COUNTER_MOD)

    def as_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in COUNTER_FIELDS}

    def copy(self) -> "CounterSet":
        return replace(self)


@dataclass(frozen=True)
class CounterSample:
    host_ip: str
    interface: str
    counters: CounterSet
    timestamp_ms: int


@dataclass
class Interface:
    name: str
    capacity_bps: int
    counters: CounterSet = field(default_factory=CounterSet)
    peer: Optional[tuple[str, str]] = None  # far end of the link, None for LAN ports
    subnet: Optional[str] = None  # CIDR attached here


@dataclass
class Device:
    id: str
    kind: str
    mgmt_ip: str
    interfaces: dict[str, Interface] = field(default_factory=dict)

    def sorted_interfaces(self) -> list[Interface]:
        return [self.interfaces[name] for name in sorted(self.interfaces)]


@dataclass
class FlowState:
    entry: FlowEntry
    installed_at_ms: int
    expire_at_ms: Optional[int]  # now >= expire_at means gone
    match_net: ipaddress.IPv4Network = field(repr=False, compare=False, default=None)

    def active(self, now_ms: int) -> bool:
        return self.expire_at_ms is None or now_ms < self.expire_at_ms


@dataclass
class VirtualClock:
    """Monotone virtual time; acceleration only matters when free-running."""

    now_ms: int
    acceleration: float = 3600.0

    def advance(self, dt_ms: int) -> None:
        if dt_ms < 0:
            raise ValueError("clock cannot move backwards")
        self.now_ms += dt_ms


class VirtualScheduler:
    """Min-heap of virtual-time callbacks, fired by the owning advance loop."""

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, Callable[[int], None], str]] = []
        self._seq = 0
        self._cancelled: set[int] = set()

    def schedule(self, at_ms: int, fn: Callable[[int], None], tag: str = "") -> int:
        self._seq += 1
        heapq.heappush(self._heap, (at_ms, self._seq, fn, tag))
        return self._seq

    def cancel(self, entry_id: int) -> None:
        self._cancelled.add(entry_id)

    def next_at(self) -> Optional[int]:
        while self._heap and self._heap[0][1] in self._cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def run_due(self, now_ms: int) -> int:
        """Fire all entries scheduled at or before now, in (time, seq) order."""
        fired = 0
        while True:
            at = self.next_at()
            if at is None or at > now_ms:
                return fired
            at_ms, seq, fn, _tag = heapq.heappop(self._heap)
            if seq in self._cancelled:
                continue
            fn(at_ms)
            fired += 1

    def pending(self) -> list[tuple[int, int, str]]:
        return sorted(
            (at, seq, tag)
            for at, seq, _fn, tag in self._heap
            if seq not in self._cancelled
        )


@dataclass(frozen=True)
class LinkTickStat:
    carried_octets: int
    dropped_octets: int
    carried_bps: float


@dataclass(frozen=True)
class DemandTickStat:
    src_prefix: str
    dst_prefix: str
    offered_octets: int
    delivered_octets: int
    path: tuple[tuple[str, str], ...]
    contributions: dict[tuple[str, str], int]


@dataclass(frozen=True)
class TickReport:
    ts_ms: int  # clock after the tick
    dt_ms: int
    links: dict[tuple[str, str], LinkTickStat]
    demands: tuple[DemandTickStat, ...]
    unroutable: tuple[tuple[str, str], ...]


# ---------------------------------------------------------------------------
# The network


class SimNetwork:
    """Built topology plus mutable control and counter state.

    Single-writer contract: step() and the control mutations must be
    serialized by the caller; reads never mutate.
    """

    def __init__(
        self,
        spec: TopologySpec,
        profile: TrafficProfile,
        *,
        epoch_ms: int = 0,
        acceleration: float = 3600.0,
        lan_capacity_bps: int = DEFAULT_LAN_CAPACITY_BPS,
    ) -> None:
        self.spec = spec
        self.profile = profile
        self.devices: dict[str, Device] = {}
        self.attachments: dict[str, tuple[str, str]] = {}
        self.routes: dict[str, dict[str, dict[str, int]]] = {}
        self.flows: dict[str, dict[int, FlowState]] = {}
        self.clock = VirtualClock(now_ms=epoch_ms, acceleration=acceleration)
        self._lan_capacity = lan_capacity_bps
        self._next_cookie = 1
        self._tick_index = 0
        self._injections: list[dict] = []
        self._candidates: dict[str, dict[str, list[str]]] = {}
        self._build(spec, profile)

    # -- construction ------------------------------------------------------

    def _build(self, spec: TopologySpec, profile: TrafficProfile) -> None:
        for dev in spec.devices:
            if dev.id in self.devices:
                raise DuplicateDeviceId(dev.id)
            if dev.kind not in (TRADITIONAL, SDN_SWITCH):
                raise SimError(f"unknown device kind {dev.kind!r} on {dev.id}")
            self.devices[dev.id] = Device(id=dev.id, kind=dev.kind, mgmt_ip=dev.mgmt_ip)

        for link in spec.links:
            if link.capacity_bps <= 0:
                raise NonPositiveCapacity(f"{link.endpoint_a}-{link.endpoint_b}")
            for end in (link.endpoint_a, link.endpoint_b):
                if end[0] not in self.devices:
                    raise DanglingEndpoint(f"link endpoint references {end[0]!r}")
                if end[1] in self.devices[end[0]].interfaces:
                    raise DanglingEndpoint(f"interface {end[0]}/{end[1]} used twice")
            dev_a, if_a = link.endpoint_a
            dev_b, if_b = link.endpoint_b
            self.devices[dev_a].interfaces[if_a] = Interface(
                name=if_a, capacity_bps=link.capacity_bps, peer=(dev_b, if_b)
            )
            self.devices[dev_b].interfaces[if_b] = Interface(
                name=if_b, capacity_bps=link.capacity_bps, peer=(dev_a, if_a)
            )

        for prefix, (dev_id, if_name) in spec.subnets.items():
            try:
                prefix = canonical_prefix(prefix)
            except ValueError as exc:
                raise SubnetUnattached(f"bad prefix {prefix!r}: {exc}") from None
            if dev_id not in self.devices:
                raise SubnetUnattached(f"{prefix} attaches to unknown device {dev_id!r}")
            if if_name in self.devices[dev_id].interfaces:
                raise SubnetUnattached(
                    f"{prefix} attachment {dev_id}/{if_name} collides with a link endpoint"
                )
            if prefix in self.attachments:
                raise SubnetUnattached(f"{prefix} attached more than once")
            self.devices[dev_id].interfaces[if_name] = Interface(
                name=if_name, capacity_bps=self._lan_capacity, subnet=prefix
            )
            self.attachments[prefix] = (dev_id, if_name)

        for demand in profile.demands:
            if len(demand.hourly_mean_bps) != 24:
                raise SimError(f"demand {demand.src_prefix}->{demand.dst_prefix} needs 24 hourly means")
        self.profile = TrafficProfile(
            demands=tuple(
                replace(
                    d,
                    src_prefix=canonical_prefix(d.src_prefix),
                    dst_prefix=canonical_prefix(d.dst_prefix),
                )
                for d in profile.demands
            ),
            rng_seed=profile.rng_seed,
        )

        self._compute_candidates()
        self._install_defaults()

    def _neighbors(self, dev_id: str) -> list[tuple[str, str]]:
        """Same-kind neighbors as (egress interface, peer device)."""
        dev = self.devices[dev_id]
        out = []
        for iface in dev.sorted_interfaces():
            if iface.peer is None:
                continue
            peer = self.devices[iface.peer[0]]
            if peer.kind == dev.kind:
                out.append((iface.name, peer.id))
        return out

    def _compute_candidates(self) -> None:
        """Per device and prefix, the loop-free (strictly downhill) egresses.

        Routing in each domain is over the same-kind subgraph only; the two
        domains never exchange traffic.
        """
        for prefix, (target, _if) in self.attachments.items():
            dist = {target: 0}
            frontier = [target]
            while frontier:
                nxt = []
                for dev_id in frontier:
                    for _iface, peer in self._neighbors(dev_id):
                        if peer not in dist:
                            dist[peer] = dist[dev_id] + 1
                            nxt.append(peer)
                frontier = nxt
            for dev_id, dev in self.devices.items():
                if dev.kind != self.devices[target].kind or dev_id == target:
                    continue
                if dev_id not in dist:
                    continue
                egresses = [
                    if_name
                    for if_name, peer in self._neighbors(dev_id)
                    if dist.get(peer, math.inf) < dist[dev_id]
                ]
                if egresses:
                    self._candidates.setdefault(dev_id, {})[prefix] = sorted(egresses)

    def _install_defaults(self) -> None:
        for dev_id, dev in self.devices.items():
            if dev.kind == TRADITIONAL:
                table = self.routes.setdefault(dev_id, {})
                for prefix, egresses in self._candidates.get(dev_id, {}).items():
                    table[prefix] = {name: DEFAULT_LOCAL_PREFERENCE for name in egresses}
            else:
                self.flows.setdefault(dev_id, {})

        for prefix, (target, attach_if) in self.attachments.items():
            if self.devices[target].kind != SDN_SWITCH:
                continue
            for dev_id, dev in self.devices.items():
                if dev.kind != SDN_SWITCH:
                    continue
                if dev_id == target:
                    out_port = attach_if
                else:
                    egresses = self._candidates.get(dev_id, {}).get(prefix)
                    if not egresses:
                        continue
                    out_port = egresses[0]
                self.install_flow(
                    FlowEntry(
                        switch_id=dev_id,
                        cookie=self.allocate_cookie(),
                        priority=BASELINE_FLOW_PRIORITY,
                        match_dst_prefix=prefix,
                        action_out_port=out_port,
                    )
                )

    # -- lookups -----------------------------------------------------------

    def device(self, dev_id: str) -> Device:
        try:
            return self.devices[dev_id]
        except KeyError:
            raise UnknownDevice(dev_id) from None

    def interface(self, dev_id: str, if_name: str) -> Interface:
        dev = self.device(dev_id)
        try:
            return dev.interfaces[if_name]
        except KeyError:
            raise UnknownInterface(f"{dev_id}/{if_name}") from None

    def device_by_mgmt_ip(self, ip: str) -> Device:
        for dev in self.devices.values():
            if dev.mgmt_ip == ip:
                return dev
        raise UnknownDevice(ip)

    def subnet_prefixes(self) -> list[str]:
        return sorted(self.attachments)

    def candidate_egresses(self, dev_id: str, dst_prefix: str) -> list[str]:
        """Loop-free egress interfaces from dev_id toward dst_prefix."""
        dst_prefix = canonical_prefix(dst_prefix)
        return list(self._candidates.get(dev_id, {}).get(dst_prefix, []))

    def allocate_cookie(self) -> int:
        cookie = self._next_cookie
        self._next_cookie += 1
        return cookie

    def get_preference(self, router_id: str, prefix: str, if_name: str) -> Optional[int]:
        prefix = canonical_prefix(prefix)
        return self.routes.get(router_id, {}).get(prefix, {}).get(if_name)

    def flow_table(self, switch_id: str) -> list[FlowState]:
        if switch_id not in self.devices:
            raise UnknownSwitch(switch_id)
        if self.devices[switch_id].kind != SDN_SWITCH:
            raise UnknownSwitch(switch_id)
        now = self.clock.now_ms
        states = [fs for fs in self.flows.get(switch_id, {}).values() if fs.active(now)]
        return sorted(states, key=lambda fs: (-fs.entry.priority, fs.entry.cookie))

    # -- control surface ----------------------------------------------------

    def apply_route_map(self, directive: RouteMapDirective) -> None:
        dev = self.devices.get(directive.router_id)
        if dev is None or dev.kind != TRADITIONAL:
            raise UnknownRouter(directive.router_id)
        if directive.egress_interface not in dev.interfaces:
            raise UnknownInterface(f"{directive.router_id}/{directive.egress_interface}")
        prefix = canonical_prefix(directive.prefix)
        table = self.routes.setdefault(directive.router_id, {}).setdefault(prefix, {})
        if directive.mode == "clear":
            table[directive.egress_interface] = DEFAULT_LOCAL_PREFERENCE
        elif directive.mode == "set":
            if directive.local_preference <= 0:
                raise ValueError("local_preference must be positive")
            table[directive.egress_interface] = directive.local_preference
        else:
            raise ValueError(f"unknown route-map mode {directive.mode!r}")

    def install_flow(self, entry: FlowEntry) -> None:
        dev = self.devices.get(entry.switch_id)
        if dev is None or dev.kind != SDN_SWITCH:
            raise UnknownSwitch(entry.switch_id)
        if entry.action_out_port not in dev.interfaces:
            raise UnknownPort(f"{entry.switch_id}/{entry.action_out_port}")
        if entry.priority < 0:
            raise ValueError("flow priority must be non-negative")
        if entry.hard_timeout_s is not None and entry.hard_timeout_s < 0:
            raise ValueError("hard_timeout_s must be non-negative")
        self._sweep_expired(entry.switch_id)
        table = self.flows.setdefault(entry.switch_id, {})
        if entry.cookie in table:
            raise DuplicateCookie(f"{entry.switch_id}#{entry.cookie}")
        now = self.clock.now_ms
        expire = None
        if entry.hard_timeout_s is not None:
            expire = now + int(round(entry.hard_timeout_s * 1000))
        match_net = ipaddress.ip_network(entry.match_dst_prefix)
        entry = replace(entry, match_dst_prefix=str(match_net))
        table[entry.cookie] = FlowState(
            entry=entry, installed_at_ms=now, expire_at_ms=expire, match_net=match_net
        )
        self._next_cookie = max(self._next_cookie, entry.cookie + 1)

    def remove_flow(self, switch_id: str, cookie: int) -> None:
        dev = self.devices.get(switch_id)
        if dev is None or dev.kind != SDN_SWITCH:
            raise UnknownSwitch(switch_id)
        self._sweep_expired(switch_id)
        table = self.flows.get(switch_id, {})
        if cookie not in table:
            raise UnknownCookie(f"{switch_id}#{cookie}")
        del table[cookie]

    def _sweep_expired(self, switch_id: str) -> None:
        now = self.clock.now_ms
        table = self.flows.get(switch_id, {})
        for cookie in [c for c, fs in table.items() if not fs.active(now)]:
            del table[cookie]

    def inject_scale(
        self, src_prefix: str, dst_prefix: str, factor: float, start_ms: int, end_ms: int
    ) -> dict:
        """Scale a demand's offered load by factor while start <= now < end."""
        if factor < 0:
            raise ValueError("factor must be non-negative")
        entry = {
            "src_prefix": canonical_prefix(src_prefix),
            "dst_prefix": canonical_prefix(dst_prefix),
            "factor": float(factor),
            "start_ms": int(start_ms),
            "end_ms": int(end_ms),
        }
        self._injections.append(entry)
        return dict(entry)

    # -- forwarding ---------------------------------------------------------

    def resolve_path(self, src_prefix: str, dst_prefix: str) -> list[tuple[str, str]]:
        """Hop-by-hop (device, egress interface) from src subnet to dst subnet.

        Traditional hops take the highest local preference (ties: smallest
        interface name); SDN hops take the highest-priority matching flow
        (ties: longest match, then lowest cookie). The final hop is the
        destination subnet's attachment interface.
        """
        src_prefix = canonical_prefix(src_prefix)
        dst_prefix = canonical_prefix(dst_prefix)
        try:
            src_dev = self.attachments[src_prefix][0]
            dst_dev, dst_if = self.attachments[dst_prefix]
        except KeyError as exc:
            raise NoPath(f"unknown prefix {exc.args[0]}") from None

        path: list[tuple[str, str]] = []
        cur = src_dev
        visited: set[str] = set()
        while cur != dst_dev:
            if cur in visited:
                raise NoPath(f"forwarding loop at {cur} toward {dst_prefix}")
            visited.add(cur)
            dev = self.devices[cur]
            if dev.kind == TRADITIONAL:
                egress = self._best_route(cur, dst_prefix)
            else:
                egress = self._best_flow_port(cur, dst_prefix)
            if egress is None:
                raise NoPath(f"no route from {cur} toward {dst_prefix}")
            path.append((cur, egress))
            peer = dev.interfaces[egress].peer
            if peer is None:
                raise NoPath(f"{cur}/{egress} has no far end toward {dst_prefix}")
            cur = peer[0]
        path.append((dst_dev, dst_if))
        return path

    def _best_route(self, router_id: str, dst_prefix: str) -> Optional[str]:
        table = self.routes.get(router_id, {}).get(dst_prefix)
        if not table:
            return None
        return min(table, key=lambda name: (-table[name], name))

    def _best_flow_port(self, switch_id: str, dst_prefix: str) -> Optional[str]:
        now = self.clock.now_ms
        dst_net = ipaddress.ip_network(dst_prefix)
        best = None
        best_rank = None
        for fs in self.flows.get(switch_id, {}).values():
            if not fs.active(now):
                continue
            match = fs.match_net
            if dst_net != match and not dst_net.subnet_of(match):
                continue
            rank = (fs.entry.priority, match.prefixlen, -fs.entry.cookie)
            if best_rank is None or rank > best_rank:
                best_rank = rank
                best = fs.entry.action_out_port
        return best

    # -- traffic engine -----------------------------------------------------

    def _offered_bps(self, demand_index: int, demand: Demand, now_ms: int) -> float:
        hour = hour_of_day(now_ms)
        mean = demand.hourly_mean_bps[hour]
        rng = random.Random(f"{self.profile.rng_seed}:{demand_index}:{self._tick_index}")
        offered = max(0.0, rng.gauss(mean, demand.noise_sigma_bps))
        for inj in self._injections:
            if (
                inj["src_prefix"] == demand.src_prefix
                and inj["dst_prefix"] == demand.dst_prefix
                and inj["start_ms"] <= now_ms < inj["end_ms"]
            ):
                offered *= inj["factor"]
        return offered

    def step(self, dt_ms: int) -> TickReport:
        """Advance one tick: route every demand, account counters, move time.

        The offered rate is sampled once per demand at the tick's starting
        hour, so ticks must not straddle hour boundaries if the profile is
        to be honored exactly (the runtime slices accordingly).
        """
        if dt_ms <= 0:
            raise ValueError("dt_ms must be positive")
        now = self.clock.now_ms
        budgets: dict[tuple[str, str], int] = {}
        link_carried: dict[tuple[str, str], int] = {}
        link_dropped: dict[tuple[str, str], int] = {}
        demand_stats: list[DemandTickStat] = []
        unroutable: list[tuple[str, str]] = []

        for index, demand in enumerate(self.profile.demands):
            offered_bps = self._offered_bps(index, demand, now)
            offered_octets = int(offered_bps * dt_ms) // 8000
            try:
                path = self.resolve_path(demand.src_prefix, demand.dst_prefix)
            except NoPath:
                unroutable.append((demand.src_prefix, demand.dst_prefix))
                continue

            src_attach = self.attachments[demand.src_prefix]
            ingress = self.devices[src_attach[0]].interfaces[src_attach[1]]
            ingress.counters.add("inOctets", offered_octets)
            ingress.counters.add("inPkts", -(-offered_octets // PACKET_BYTES))

            contributions: dict[tuple[str, str], int] = {}
            flow_octets = offered_octets
            for dev_id, if_name in path:
                key = (dev_id, if_name)
                iface = self.devices[dev_id].interfaces[if_name]
                if key not in budgets:
                    budgets[key] = (iface.capacity_bps * dt_ms) // 8000
                carried = min(flow_octets, budgets[key])
                dropped = flow_octets - carried
                budgets[key] -= carried
                iface.counters.add("outOctets", carried)
                iface.counters.add("outPkts", -(-carried // PACKET_BYTES))
                if dropped:
                    iface.counters.add("outDiscards", -(-dropped // PACKET_BYTES))
                if iface.peer is not None and carried:
                    peer_if = self.devices[iface.peer[0]].interfaces[iface.peer[1]]
                    peer_if.counters.add("inOctets", carried)
                    peer_if.counters.add("inPkts", -(-carried // PACKET_BYTES))
                link_carried[key] = link_carried.get(key, 0) + carried
                link_dropped[key] = link_dropped.get(key, 0) + dropped
                contributions[key] = carried
                flow_octets = carried

            demand_stats.append(
                DemandTickStat(
                    src_prefix=demand.src_prefix,
                    dst_prefix=demand.dst_prefix,
                    offered_octets=offered_octets,
                    delivered_octets=flow_octets,
                    path=tuple(path),
                    contributions=contributions,
                )
            )

        self._tick_index += 1
        self.clock.advance(dt_ms)
        for switch_id in self.flows:
            self._sweep_expired(switch_id)

        dt_s = dt_ms / 1000.0
        links = {
            key: LinkTickStat(
                carried_octets=link_carried.get(key, 0),
                dropped_octets=link_dropped.get(key, 0),
                carried_bps=link_carried.get(key, 0) * 8 / dt_s,
            )
            for key in set(link_carried) | set(link_dropped)
        }
        return TickReport(
            ts_ms=self.clock.now_ms,
            dt_ms=dt_ms,
            links=links,
            demands=tuple(demand_stats),
            unroutable=tuple(unroutable),
        )

    # -- telemetry surfaces --------------------------------------------------

    def read_counters(self, device_id: str) -> list[CounterSample]:
        dev = self.device(device_id)
        if dev.kind != TRADITIONAL:
            raise WrongDeviceKind(f"{device_id} is {dev.kind}")
        now = self.clock.now_ms
        return [
            CounterSample(dev.mgmt_ip, iface.name, iface.counters.copy(), now)
            for iface in dev.sorted_interfaces()
        ]

    def read_flow_stats(self) -> list[CounterSample]:
        now = self.clock.now_ms
        samples = []
        for dev_id in sorted(self.devices):
            dev = self.devices[dev_id]
            if dev.kind != SDN_SWITCH:
                continue
            for iface in dev.sorted_interfaces():
                samples.append(CounterSample(dev.mgmt_ip, iface.name, iface.counters.copy(), now))
        return samples

    def routing_snapshot(self) -> dict[tuple[str, str], Optional[tuple[tuple[str, str], ...]]]:
        """resolve_path over every ordered subnet pair; None where no path."""
        snapshot = {}
        prefixes = self.subnet_prefixes()
        for src in prefixes:
            for dst in prefixes:
                if src == dst:
                    continue
                try:
                    snapshot[(src, dst)] = tuple(self.resolve_path(src, dst))
                except NoPath:
                    snapshot[(src, dst)] = None
        return snapshot

    # -- persistence ---------------------------------------------------------

    def get_state(self) -> dict:
        return {
            "clock_now_ms": self.clock.now_ms,
            "tick_index": self._tick_index,
            "next_cookie": self._next_cookie,
            "injections": [dict(i) for i in self._injections],
            "counters": {
                dev_id: {name: iface.counters.as_dict() for name, iface in dev.interfaces.items()}
                for dev_id, dev in self.devices.items()
            },
            "routes": {
                dev_id: {prefix: dict(entries) for prefix, entries in table.items()}
                for dev_id, table in self.routes.items()
            },
            "flows": {
                switch_id: [
                    {
                        "cookie": fs.entry.cookie,
                        "priority": fs.entry.priority,
                        "match_dst_prefix": fs.entry.match_dst_prefix,
                        "action_out_port": fs.entry.action_out_port,
                        "hard_timeout_s": fs.entry.hard_timeout_s,
                        "installed_at_ms": fs.installed_at_ms,
                        "expire_at_ms": fs.expire_at_ms,
                    }
                    for fs in table.values()
                ]
                for switch_id, table in self.flows.items()
            },
        }

    def set_state(self, state: dict) -> None:
        self.clock.now_ms = state["clock_now_ms"]
        self._tick_index = state["tick_index"]
        self._next_cookie = state["next_cookie"]
        self._injections = [dict(i) for i in state["injections"]]
        for dev_id, ifmap in state["counters"].items():
            for if_name, counters in ifmap.items():
                iface = self.interface(dev_id, if_name)
                iface.counters = CounterSet(**counters)
        self.routes = {
            dev_id: {prefix: dict(entries) for prefix, entries in table.items()}
            for dev_id, table in state["routes"].items()
        }
        self.flows = {switch_id: {} for switch_id in state["flows"]}
        for switch_id, entries in state["flows"].items():
            for raw in entries:
                entry = FlowEntry(
                    switch_id=switch_id,
                    cookie=raw["cookie"],
                    priority=raw["priority"],
                    match_dst_prefix=raw["match_dst_prefix"],
                    action_out_port=raw["action_out_port"],
                    hard_timeout_s=raw["hard_timeout_s"],
                )
                self.flows[switch_id][entry.cookie] = FlowState(
                    entry=entry,
                    installed_at_ms=raw["installed_at_ms"],
                    expire_at_ms=raw["expire_at_ms"],
                    match_net=ipaddress.ip_network(entry.match_dst_prefix),
                )


def build_topology(
    spec: TopologySpec,
    profile: TrafficProfile,
    *,
    epoch_ms: int = 0,
    acceleration: float = 3600.0,
    lan_capacity_bps: int = DEFAULT_LAN_CAPACITY_BPS,
) -> SimNetwork:
    """Validate the topology description and return a ready network with
    zeroed counters."""
    return SimNetwork(
        spec,
        profile,
        epoch_ms=epoch_ms,
        acceleration=acceleration,
        lan_capacity_bps=lan_capacity_bps,
    )
