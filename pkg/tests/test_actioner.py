from __future__ import annotations

import itertools

import pytest

from trendnet.actioner import (
    Actioner,
    ActionerConfig,
    IllegalDecisionState,
    LoadBalanceDecision,
    NoAlternatePath,
    choose_alternate,
    decision_from_export,
    execute,
    plan_sdn,
    plan_traditional,
    revert,
)
from trendnet.analytics import TrendEvent, TrendTransition
from trendnet.netsim import (
    FlowEntry,
    RouteMapDirective,
    VirtualScheduler,
    build_topology,
)

from conftest import diamond_topology, steady_profile

MBPS = 1_000_000


def trad_net(rate=6 * MBPS):
    return build_topology(
        diamond_topology("traditional"), steady_profile("10.0.1.0/24", "10.0.2.0/24", rate)
    )


def sdn_net(rate=6 * MBPS):
    return build_topology(
        diamond_topology("sdn-switch"), steady_profile("10.1.1.0/24", "10.1.2.0/24", rate)
    )


def planned_traditional_decision(net, cfg=None):
    cfg = cfg or ActionerConfig()
    congested = ("R1", "FastEthernet0_1")
    alternate = ("R1", "FastEthernet0_2")
    return LoadBalanceDecision(
        id="d-1",
        trend_event_id="t-1",
        domain="traditional",
        affected_prefix="10.0.2.0/24",
        congested=congested,
        alternate=alternate,
        rendered=plan_traditional("10.0.2.0/24", congested, alternate, cfg),
        duration_ms=6 * 3_600_000,
        created_at_ms=net.clock.now_ms,
        src_prefix="10.0.1.0/24",
    )


# -- choose_alternate ---------------------------------------------------------


def test_choose_alternate_picks_least_utilized():
    net = trad_net()
    utils = {("R1", "FastEthernet0_1"): 0.9, ("R1", "FastEthernet0_2"): 0.2}
    dev, iface = choose_alternate(
        net, ("R1", "FastEthernet0_1"), "10.0.2.0/24", lambda d, i: utils.get((d, i), 0.5)
    )
    assert (dev, iface) == ("R1", "FastEthernet0_2")


def test_choose_alternate_tie_breaks_by_name():
    spec = diamond_topology("traditional")
    # add a third parallel path R1->R5->R3 so two alternates tie
    from trendnet.netsim import DeviceSpec, LinkSpec, TopologySpec

    spec = TopologySpec(
        devices=spec.devices + (DeviceSpec("R5", "traditional", "10.0.0.15"),),
        links=spec.links
        + (
            LinkSpec(("R1", "FastEthernet0_3"), ("R5", "FastEthernet0_1"), 10 * MBPS),
            LinkSpec(("R5", "FastEthernet0_2"), ("R3", "FastEthernet0_3"), 10 * MBPS),
        ),
        subnets=spec.subnets,
    )
    net = build_topology(spec, steady_profile("10.0.1.0/24", "10.0.2.0/24", 0.0))
    dev, iface = choose_alternate(net, ("R1", "FastEthernet0_1"), "10.0.2.0/24", lambda d, i: 0.3)
    assert (dev, iface) == ("R1", "FastEthernet0_2")  # smallest name among ties


def test_choose_alternate_single_homed_raises():
    net = trad_net()
    # R2's only candidate toward 10.0.2.0/24 is its downhill egress
    with pytest.raises(NoAlternatePath):
        choose_alternate(net, ("R2", "FastEthernet0_2"), "10.0.2.0/24", lambda d, i: 0.0)


# -- planning -----------------------------------------------------------------


def test_plan_traditional_renders_90_and_110():
    cfg = ActionerConfig()
    directives = plan_traditional(
        "10.0.1.0/24", ("R1", "Fa0_1"), ("R1", "Fa0_2"), cfg
    )
    assert [(d.egress_interface, d.local_preference, d.mode) for d in directives] == [
        ("Fa0_1", 90, "set"),
        ("Fa0_2", 110, "set"),
    ]
    assert all(d.prefix == "10.0.1.0/24" for d in directives)
    assert all(d.router_id == "R1" for d in directives)


def test_plan_traditional_steers_resolution():
    net = trad_net()
    directives = plan_traditional(
        "10.0.2.0/24", ("R1", "FastEthernet0_1"), ("R1", "FastEthernet0_2"), ActionerConfig()
    )
    for d in directives:
        net.apply_route_map(d)
    assert net.resolve_path("10.0.1.0/24", "10.0.2.0/24")[0] == ("R1", "FastEthernet0_2")


def test_plan_sdn_priority_and_timeout():
    cfg = ActionerConfig()
    (entry,) = plan_sdn(
        "10.1.2.0/24", ("S1", "eth1"), ("S1", "eth2"), cfg, duration_ms=3_600_000, cookie=77
    )
    assert entry.priority == 200
    assert entry.hard_timeout_s == pytest.approx(3600.0)
    assert entry.action_out_port == "eth2"

    cfg_no_timeout = ActionerConfig(sdn_hard_timeout=False)
    (entry2,) = plan_sdn(
        "10.1.2.0/24", ("S1", "eth1"), ("S1", "eth2"), cfg_no_timeout, 3_600_000, 78
    )
    assert entry2.hard_timeout_s is None


def test_plan_sdn_steers_resolution():
    net = sdn_net()
    (entry,) = plan_sdn(
        "10.1.2.0/24", ("S1", "eth1"), ("S1", "eth2"), ActionerConfig(),
        duration_ms=3_600_000, cookie=net.allocate_cookie(),
    )
    net.install_flow(entry)
    assert net.resolve_path("10.1.1.0/24", "10.1.2.0/24")[0] == ("S1", "eth2")


# -- execute / revert ------------------------------------------------------------


def test_execute_applies_and_sets_pref_table():
    net = trad_net()
    decision = planned_traditional_decision(net)
    execute(decision, net, net.clock.now_ms)
    assert decision.status == "applied"
    assert net.get_preference("R1", "10.0.2.0/24", "FastEthernet0_1") == 90
    assert net.get_preference("R1", "10.0.2.0/24", "FastEthernet0_2") == 110


def test_execute_unknown_router_fails_with_rollback():
    net = trad_net()
    decision = planned_traditional_decision(net)
    decision.rendered = [
        RouteMapDirective("R1", "10.0.2.0/24", "FastEthernet0_1", 90, "set"),
        RouteMapDirective("R42", "10.0.2.0/24", "FastEthernet0_2", 110, "set"),
    ]
    snapshot = net.routing_snapshot()
    execute(decision, net, 0)
    assert decision.status == "failed"
    assert "UnknownRouter" in decision.failure_cause
    assert net.routing_snapshot() == snapshot
    assert net.get_preference("R1", "10.0.2.0/24", "FastEthernet0_1") == 100


def test_execute_twice_rejected():
    net = trad_net()
    decision = planned_traditional_decision(net)
    execute(decision, net, 0)
    with pytest.raises(IllegalDecisionState):
        execute(decision, net, 0)


def test_revert_restores_routing_function():
    net = trad_net()
    before = net.routing_snapshot()
    decision = planned_traditional_decision(net)
    execute(decision, net, 0)
    assert net.routing_snapshot() != before
    revert(decision, net, 1000, tolerate_missing_flow=True)
    assert decision.status == "reverted"
    assert decision.reverted_at_ms == 1000
    assert net.routing_snapshot() == before


def test_revert_on_planned_rejected():
    net = trad_net()
    decision = planned_traditional_decision(net)
    with pytest.raises(IllegalDecisionState):
        revert(decision, net, 0, tolerate_missing_flow=True)


def test_sdn_revert_tolerates_timed_out_flow():
    net = sdn_net()
    cookie = net.allocate_cookie()
    entry = FlowEntry("S1", cookie, 200, "10.1.2.0/24", "eth2", hard_timeout_s=60)
    decision = LoadBalanceDecision(
        id="d-1", trend_event_id="t-1", domain="sdn", affected_prefix="10.1.2.0/24",
        congested=("S1", "eth1"), alternate=("S1", "eth2"), rendered=[entry],
        duration_ms=60_000, created_at_ms=0, src_prefix="10.1.1.0/24",
    )
    before = net.routing_snapshot()
    execute(decision, net, 0)
    net.step(61_000)  # hard timeout removes the flow first
    revert(decision, net, net.clock.now_ms, tolerate_missing_flow=True)
    assert decision.status == "reverted"
    assert net.routing_snapshot() == before


def test_decision_export_roundtrip():
    net = trad_net()
    decision = planned_traditional_decision(net)
    execute(decision, net, 12345)
    clone = decision_from_export(decision.export())
    assert clone.export() == decision.export()


# -- Actioner orchestration --------------------------------------------------------


def make_actioner(net, policy="auto", share=None, utils=None):
    scheduler = VirtualScheduler()
    ids = itertools.count(1)
    transitions: list = []  # (id, status) captured at callback time
    actioner = Actioner(
        net,
        ActionerConfig(policy=policy),
        scheduler,
        duration_ms=lambda: 6 * 3_600_000,
        utilization_of=lambda d, i: (utils or {}).get((d, i), 0.0),
        top_prefix_for_link=lambda d, i: share,
        next_decision_id=lambda: f"d-{next(ids):04d}",
        on_transition=lambda d: transitions.append((d.id, d.status)),
    )
    return actioner, scheduler, transitions


def confirmed_transition(net, link=("10.0.0.11", "FastEthernet0_1")):
    event = TrendEvent(
        id="t-0001", link=link, started_at_ms=0, confirmed_at_ms=net.clock.now_ms or 1,
        peak_utilization=1.0, benchmark_id="bm-0001",
    )
    return TrendTransition("confirmed", event)


def test_auto_policy_executes_without_operator():
    net = trad_net()
    actioner, scheduler, transitions = make_actioner(
        net, share=("10.0.2.0/24", "10.0.1.0/24")
    )
    decision = actioner.on_trend(confirmed_transition(net))
    assert decision.status == "applied"
    assert [status for _id, status in transitions] == ["planned", "applied"]
    assert actioner.pending_reverts() == {decision.id: decision.applied_at_ms + decision.duration_ms}


def test_manual_policy_waits_for_approval():
    net = trad_net()
    actioner, scheduler, _ = make_actioner(net, policy="manual", share=("10.0.2.0/24", "10.0.1.0/24"))
    decision = actioner.on_trend(confirmed_transition(net))
    assert decision.status == "planned"
    actioner.approve(decision.id)
    assert decision.status == "applied"


def test_ended_transition_is_noop():
    net = trad_net()
    actioner, _, transitions = make_actioner(net, share=("10.0.2.0/24", "10.0.1.0/24"))
    event = TrendEvent(
        id="t-9", link=("10.0.0.11", "FastEthernet0_1"), started_at_ms=0,
        confirmed_at_ms=1, ended_at_ms=2, peak_utilization=1.0, benchmark_id="bm-1",
    )
    assert actioner.on_trend(TrendTransition("ended", event)) is None
    assert transitions == []


def test_second_confirm_on_same_link_prefix_skipped_while_active():
    net = trad_net()
    actioner, _, _ = make_actioner(net, share=("10.0.2.0/24", "10.0.1.0/24"))
    first = actioner.on_trend(confirmed_transition(net))
    assert first.status == "applied"
    # the link is now off the path, so a straggler confirm plans nothing
    second = actioner.on_trend(confirmed_transition(net))
    assert second is None
    assert len(actioner.ordered_decisions()) == 1


def test_scheduled_revert_fires_at_deadline():
    net = trad_net()
    before = net.routing_snapshot()
    actioner, scheduler, _ = make_actioner(net, share=("10.0.2.0/24", "10.0.1.0/24"))
    decision = actioner.on_trend(confirmed_transition(net))
    deadline = decision.applied_at_ms + decision.duration_ms
    net.clock.advance(deadline - net.clock.now_ms)
    scheduler.run_due(net.clock.now_ms)
    assert decision.status == "reverted"
    assert net.routing_snapshot() == before


def test_manual_revert_cancels_scheduler_entry():
    net = trad_net()
    actioner, scheduler, _ = make_actioner(net, share=("10.0.2.0/24", "10.0.1.0/24"))
    decision = actioner.on_trend(confirmed_transition(net))
    actioner.revert_decision(decision.id)
    assert decision.status == "reverted"
    assert actioner.pending_reverts() == {}
    # deadline passing afterwards must not double-revert
    net.clock.advance(decision.duration_ms + 10)
    scheduler.run_due(net.clock.now_ms)
    assert decision.status == "reverted"


def test_no_alternate_records_failed_decision():
    net = trad_net()
    actioner, _, transitions = make_actioner(
        net, share=("10.0.2.0/24", "10.0.1.0/24")
    )
    event = TrendEvent(
        id="t-0002", link=("10.0.0.12", "FastEthernet0_2"), started_at_ms=0,
        confirmed_at_ms=1, peak_utilization=1.0, benchmark_id="bm-0001",
    )
    decision = actioner.on_trend(TrendTransition("confirmed", event))
    assert decision.status == "failed"
    assert "NoAlternatePath" in decision.failure_cause
    assert transitions[-1] == (decision.id, "failed")
