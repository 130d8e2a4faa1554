"""Turns confirmed trends into load-balancing actions and reverts them.

For a congested traditional egress the affected prefix is steered by a
pair of local-preference directives (lower on the old path, higher on the
new); for an SDN port a higher-priority flow entry is pushed. Every
decision carries its revert deadline; an explicit scheduled revert is
authoritative, with the SDN hard timeout as defense in depth.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

from . import netsim
from .analytics import TrendTransition
from .netsim import (
    FlowEntry,
    NoPath,
    RouteMapDirective,
    SimError,
    SimNetwork,
    TRADITIONAL,
    VirtualScheduler,
)

logger = logging.getLogger(__name__)


class NoAlternatePath(Exception):
    pass


class IllegalDecisionState(Exception):
    """Raised when execute/revert is attempted from the wrong status."""


@dataclass
class ActionerConfig:
    lp_low: int = 90
    lp_high: int = 110
    flow_priority: int = 200
    duration_periods: int = 6
    policy: str = "auto"  # "auto" | "manual"
    sdn_hard_timeout: bool = True

    def validate(self) -> list[str]:
        problems = []
        if self.lp_low <= 0 or self.lp_high <= 0:
            problems.append("local preference constants must be positive")
        if self.flow_priority < 0:
            problems.append("flow_priority must be non-negative")
        if self.duration_periods <= 0:
            problems.append("duration_periods must be positive")
        if self.policy not in ("auto", "manual"):
            problems.append("policy must be 'auto' or 'manual'")
        return problems


@dataclass
class LoadBalanceDecision:
    id: str
    trend_event_id: str
    domain: str  # "traditional" | "sdn"
    affected_prefix: str
    congested: tuple[str, str]  # (device, egress interface)
    alternate: Optional[tuple[str, str]]
    rendered: list
    duration_ms: int
    created_at_ms: int
    applied_at_ms: Optional[int] = None
    reverted_at_ms: Optional[int] = None
    status: str = "planned"  # planned -> applied -> reverted, or -> failed
    failure_cause: Optional[str] = None
    src_prefix: Optional[str] = None  # demand source that crossed the link

    def export(self) -> dict:
        def endpoint(pair):
            return None if pair is None else {"device": pair[0], "interface": pair[1]}

        return {
            "id": self.id,
            "trend_event_id": self.trend_event_id,
            "domain": self.domain,
            "affected_prefix": self.affected_prefix,
            "congested": endpoint(self.congested),
            "alternate": endpoint(self.alternate),
            "rendered": [_render_item(item) for item in self.rendered],
            "duration_ms": self.duration_ms,
            "created_at_ms": self.created_at_ms,
            "applied_at_ms": self.applied_at_ms,
            "reverted_at_ms": self.reverted_at_ms,
            "status": self.status,
            "failure_cause": self.failure_cause,
            "src_prefix": self.src_prefix,
        }


def _render_item(item) -> dict:
    if isinstance(item, RouteMapDirective):
        return {
            "type": "route_map",
            "router_id": item.router_id,
            "prefix": item.prefix,
            "egress_interface": item.egress_interface,
            "local_preference": item.local_preference,
            "mode": item.mode,
        }
    if isinstance(item, FlowEntry):
        return {
            "type": "flow",
            "switch_id": item.switch_id,
            "cookie": item.cookie,
            "priority": item.priority,
            "match_dst_prefix": item.match_dst_prefix,
            "action_out_port": item.action_out_port,
            "hard_timeout_s": item.hard_timeout_s,
        }
    raise TypeError(f"unknown rendered item {type(item).__name__}")


def choose_alternate(
    net: SimNetwork,
    congested: tuple[str, str],
    dst_prefix: str,
    utilization_of: Callable[[str, str], float],
) -> tuple[str, str]:
    """Least-utilized other egress on the congested device that reaches dst."""
    dev_id, congested_if = congested
    candidates = [
        name for name in net.candidate_egresses(dev_id, dst_prefix) if name != congested_if
    ]
    if not candidates:
        raise NoAlternatePath(f"{dev_id} has no alternate egress toward {dst_prefix}")
    return dev_id, min(candidates, key=lambda name: (utilization_of(dev_id, name), name))


def plan_traditional(
    affected_prefix: str,
    congested: tuple[str, str],
    alternate: tuple[str, str],
    cfg: ActionerConfig,
) -> list[RouteMapDirective]:
    router = congested[0]
    return [
        RouteMapDirective(router, affected_prefix, congested[1], cfg.lp_low, "set"),
        RouteMapDirective(router, affected_prefix, alternate[1], cfg.lp_high, "set"),
    ]


def plan_sdn(
    affected_prefix: str,
    congested: tuple[str, str],
    alternate: tuple[str, str],
    cfg: ActionerConfig,
    duration_ms: int,
    cookie: int,
) -> list[FlowEntry]:
    timeout = duration_ms / 1000.0 if cfg.sdn_hard_timeout else None
    return [
        FlowEntry(
            switch_id=congested[0],
            cookie=cookie,
            priority=cfg.flow_priority,
            match_dst_prefix=affected_prefix,
            action_out_port=alternate[1],
            hard_timeout_s=timeout,
        )
    ]


def execute(decision: LoadBalanceDecision, net: SimNetwork, now_ms: int) -> LoadBalanceDecision:
    """Apply the rendered items in order; roll back on any failure."""
    if decision.status != "planned":
        raise IllegalDecisionState(f"execute requires planned, was {decision.status}")
    undo: list[Callable[[], None]] = []
    try:
        for item in decision.rendered:
            if isinstance(item, RouteMapDirective):
                prior = net.get_preference(item.router_id, item.prefix, item.egress_interface)
                net.apply_route_map(item)
                restore = prior if prior is not None else netsim.DEFAULT_LOCAL_PREFERENCE
                undo.append(
                    lambda i=item, p=restore: net.apply_route_map(
                        RouteMapDirective(i.router_id, i.prefix, i.egress_interface, p, "set")
                    )
                )
            else:
                net.install_flow(item)
                undo.append(lambda i=item: net.remove_flow(i.switch_id, i.cookie))
    except SimError as exc:
        for rollback in reversed(undo):
            rollback()
        decision.status = "failed"
        decision.failure_cause = f"{type(exc).__name__}: {exc}"
        return decision
    decision.status = "applied"
    decision.applied_at_ms = now_ms
    return decision


def revert(
    decision: LoadBalanceDecision, net: SimNetwork, now_ms: int, *, tolerate_missing_flow: bool
) -> LoadBalanceDecision:
    """Restore the pre-decision control state and close the decision."""
    if decision.status != "applied":
        raise IllegalDecisionState(f"revert requires applied, was {decision.status}")
    for item in decision.rendered:
        if isinstance(item, RouteMapDirective):
            net.apply_route_map(
                RouteMapDirective(
                    item.router_id,
                    item.prefix,
                    item.egress_interface,
                    netsim.DEFAULT_LOCAL_PREFERENCE,
                    "clear",
                )
            )
        else:
            try:
                net.remove_flow(item.switch_id, item.cookie)
            except netsim.UnknownCookie:
                if not tolerate_missing_flow:
                    raise
                # hard timeout already removed it; revert counts as done
    decision.status = "reverted"
    decision.reverted_at_ms = now_ms
    return decision


class Actioner:
    """Consumes trend transitions sequentially and owns the decision registry."""

    def __init__(
        self,
        net: SimNetwork,
        cfg: ActionerConfig,
        scheduler: VirtualScheduler,
        *,
        duration_ms: Callable[[], int],
        utilization_of: Callable[[str, str], float],
        top_prefix_for_link: Callable[[str, str], Optional[tuple[str, str]]],
        next_decision_id: Callable[[], str],
        on_transition: Callable[[LoadBalanceDecision], None],
    ) -> None:
        self.net = net
        self.cfg = cfg
        self.scheduler = scheduler
        self._duration_ms = duration_ms
        self._utilization_of = utilization_of
        self._top_prefix_for_link = top_prefix_for_link
        self._next_decision_id = next_decision_id
        self._on_transition = on_transition
        self.decisions: dict[str, LoadBalanceDecision] = {}
        self._order: list[str] = []
        self._revert_entries: dict[str, tuple[int, int]] = {}  # id -> (entry, at_ms)

    # -- intake ---------------------------------------------------------------

    def on_trend(self, transition: TrendTransition) -> Optional[LoadBalanceDecision]:
        if transition.kind != "confirmed":
            return None  # an active decision still runs its own clock
        event = transition.event
        try:
            device = self.net.device_by_mgmt_ip(event.link[0])
        except netsim.UnknownDevice:
            logger.warning("trend %s on unknown host %s", event.id, event.link[0])
            return None
        congested = (device.id, event.link[1])

        share = self._top_prefix_for_link(*congested)
        if share is None:
            logger.info("trend %s: no per-prefix traffic share for %s", event.id, congested)
            return None
        dst_prefix, src_prefix = share

        try:
            path = self.net.resolve_path(src_prefix, dst_prefix)
        except NoPath:
            return None
        if congested not in path:
            logger.info("trend %s: %s already off the %s path", event.id, congested, dst_prefix)
            return None

        if any(
            d.status in ("planned", "applied")
            and d.congested == congested
            and d.affected_prefix == dst_prefix
            for d in self.decisions.values()
        ):
            logger.info("trend %s: decision already active for %s %s", event.id, congested, dst_prefix)
            return None

        duration = self._duration_ms()
        decision = LoadBalanceDecision(
            id=self._next_decision_id(),
            trend_event_id=event.id,
            domain="traditional" if device.kind == TRADITIONAL else "sdn",
            affected_prefix=dst_prefix,
            congested=congested,
            alternate=None,
            rendered=[],
            duration_ms=duration,
            created_at_ms=self.net.clock.now_ms,
            src_prefix=src_prefix,
        )
        self.decisions[decision.id] = decision
        self._order.append(decision.id)

        try:
            decision.alternate = choose_alternate(
                self.net, congested, dst_prefix, self._utilization_of
            )
        except NoAlternatePath as exc:
            decision.status = "failed"
            decision.failure_cause = f"NoAlternatePath: {exc}"
            self._on_transition(decision)
            return decision

        if decision.domain == "traditional":
            decision.rendered = plan_traditional(dst_prefix, congested, decision.alternate, self.cfg)
        else:
            decision.rendered = plan_sdn(
                dst_prefix,
                congested,
                decision.alternate,
                self.cfg,
                duration,
                self.net.allocate_cookie(),
            )
        self._on_transition(decision)

        if self.cfg.policy == "auto":
            self._execute_and_schedule(decision)
        return decision

    # -- operator / scheduler entry points -------------------------------------

    def approve(self, decision_id: str) -> LoadBalanceDecision:
        decision = self._get(decision_id)
        self._execute_and_schedule(decision)
        return decision

    def revert_decision(self, decision_id: str) -> LoadBalanceDecision:
        decision = self._get(decision_id)
        reverted = revert(
            decision,
            self.net,
            self.net.clock.now_ms,
            tolerate_missing_flow=self.cfg.sdn_hard_timeout,
        )
        entry = self._revert_entries.pop(decision_id, None)
        if entry is not None:
            self.scheduler.cancel(entry[0])
        self._on_transition(reverted)
        return reverted

    def _execute_and_schedule(self, decision: LoadBalanceDecision) -> None:
        execute(decision, self.net, self.net.clock.now_ms)
        self._on_transition(decision)
        if decision.status == "applied":
            self._schedule_revert(decision.id, decision.applied_at_ms + decision.duration_ms)

    def _schedule_revert(self, decision_id: str, at_ms: int) -> None:
        entry = self.scheduler.schedule(
            at_ms, lambda _at: self._scheduled_revert(decision_id), tag=f"revert:{decision_id}"
        )
        self._revert_entries[decision_id] = (entry, at_ms)

    def _scheduled_revert(self, decision_id: str) -> None:
        decision = self.decisions.get(decision_id)
        if decision is None or decision.status != "applied":
            return
        self.revert_decision(decision_id)

    def _get(self, decision_id: str) -> LoadBalanceDecision:
        try:
            return self.decisions[decision_id]
        except KeyError:
            raise KeyError(decision_id) from None

    # -- views / persistence -----------------------------------------------------

    def ordered_decisions(self) -> list[LoadBalanceDecision]:
        return [self.decisions[i] for i in self._order]

    def pending_reverts(self) -> dict[str, int]:
        return {decision_id: at for decision_id, (_e, at) in self._revert_entries.items()}

    def restore_decision(self, decision: LoadBalanceDecision, revert_at_ms: Optional[int]) -> None:
        self.decisions[decision.id] = decision
        self._order.append(decision.id)
        if revert_at_ms is not None and decision.status == "applied":
            self._schedule_revert(decision.id, revert_at_ms)


def decision_from_export(doc: dict) -> LoadBalanceDecision:
    """Rebuild a decision from its journaled export document."""

    def endpoint(obj):
        return None if obj is None else (obj["device"], obj["interface"])

    rendered = []
    for item in doc["rendered"]:
        if item["type"] == "route_map":
            rendered.append(
                RouteMapDirective(
                    item["router_id"],
                    item["prefix"],
                    item["egress_interface"],
                    item["local_preference"],
                    item["mode"],
                )
            )
        else:
            rendered.append(
                FlowEntry(
                    switch_id=item["switch_id"],
                    cookie=item["cookie"],
                    priority=item["priority"],
                    match_dst_prefix=item["match_dst_prefix"],
                    action_out_port=item["action_out_port"],
                    hard_timeout_s=item["hard_timeout_s"],
                )
            )
    return LoadBalanceDecision(
        id=doc["id"],
        trend_event_id=doc["trend_event_id"],
        domain=doc["domain"],
        affected_prefix=doc["affected_prefix"],
        congested=endpoint(doc["congested"]),
        alternate=endpoint(doc["alternate"]),
        rendered=rendered,
        duration_ms=doc["duration_ms"],
        created_at_ms=doc["created_at_ms"],
        applied_at_ms=doc["applied_at_ms"],
        reverted_at_ms=doc["reverted_at_ms"],
        status=doc["status"],
        failure_cause=doc["failure_cause"],
        src_prefix=doc.get("src_prefix"),
    )
