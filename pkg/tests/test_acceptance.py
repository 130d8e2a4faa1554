"""Acceptance suite: every exit criterion, each printing one PASS/FAIL line
in the terminal summary (see conftest.pytest_terminal_summary)."""
from __future__ import annotations

import functools
import json
import math
import os
import random
import time

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trendnet import analytics, persist
from trendnet.cli import main as cli_main
from trendnet.config import build_config
from trendnet.pipeline import (
    COUNTER_FIELDS,
    DEFAULT_ALLOW,
    IngestBus,
    MetricAllowList,
    decode,
    encode,
    filter_metrics,
)
from trendnet.runtime import TrendNetRuntime
from trendnet.server import start_server
from trendnet.tsdb import SeriesKey

from conftest import record_acceptance
from test_pipeline import REFERENCE_ENVELOPE, raw_samples, reference_raw_sample

MS_PER_HOUR = 3_600_000
EPOCH = 1_522_800_000_000
WRAP = 2**32


def criterion(number: int, title: str):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                record_acceptance(str(number), title, "FAIL")
                raise
            record_acceptance(str(number), title, "PASS")
            return result

        return wrapper

    return decorate


def run_cli(*argv: str) -> int:
    try:
        return cli_main(list(argv))
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2


@pytest.fixture(scope="module")
def baseline_scenario(tmp_path_factory):
    """The reference scenario run once over the CLI: 72 hourly samples with
    the default diurnal profile (noise on), then a 3-day benchmark."""
    root = tmp_path_factory.mktemp("baseline")
    data_dir = str(root / "data")
    cfg_path = root / "cfg.json"
    cfg_path.write_text(json.dumps({"data_dir": data_dir}))
    bench_out = str(root / "benchmarks.json")

    started = time.monotonic()
    assert run_cli("simulate", "--hours", "72", "--period", "1h", "--config", str(cfg_path)) == 0
    assert run_cli(
        "benchmark", "build", "--days", "3", "--out", bench_out, "--config", str(cfg_path)
    ) == 0
    elapsed = time.monotonic() - started

    benchmarks = json.loads(open(bench_out).read())["benchmarks"]
    cfg = build_config(json.loads(cfg_path.read_text()))
    runtime = TrendNetRuntime(cfg)
    monitored = [
        (m.ref.host_ip, m.ref.interface, m.ref.src, m.ref.capacity_bps) for m in runtime.monitored
    ]
    runtime.close()
    return {
        "data_dir": data_dir,
        "elapsed_s": elapsed,
        "benchmarks": benchmarks,
        "monitored": monitored,
    }


def spike_runtime(tmp_path, *, domain: str = "traditional", policy: str = "auto"):
    """Noise-free runtime benchmarked over 72 h, ready for a spike at hour 8."""
    doc = {"data_dir": str(tmp_path / f"data-{domain}-{policy}")}
    cfg = build_config(doc)
    for d in cfg.sim.profile["demands"]:
        d["noise_sigma_bps"] = 0.0
    cfg.actioner.policy = policy
    runtime = TrendNetRuntime(cfg)
    runtime.advance_hours(72)
    runtime.run_benchmark(3)
    runtime.advance_hours(8)  # 08:00 on day 4, business hours
    return runtime


# -- 1: scenario shape ---------------------------------------------------------------


@criterion(1, "72-sample scenario yields 24 (mean, sigma) pairs per link in <60s")
def test_criterion_1_scenario_shape(baseline_scenario):
    benchmarks = baseline_scenario["benchmarks"]
    assert len(benchmarks) == 4  # both domains' demand paths are monitored
    for doc in benchmarks:
        assert [row["h"] for row in doc["hours"]] == list(range(24))
        assert all("mean" in row and "sigma" in row for row in doc["hours"])
    # exactly 72 derivable utilization samples per link: anchor + 72 polls
    points = persist.load_points(os.path.join(baseline_scenario["data_dir"], "points.log"))
    for host_ip, interface, src, _cap in baseline_scenario["monitored"]:
        series = [
            (p.ts_ms, p.value)
            for key, p in points
            if key == SeriesKey("outOctets", host_ip, interface, src)
        ]
        assert len(series) == 73
        assert len(series) - 1 == 72
    assert baseline_scenario["elapsed_s"] < 60.0


# -- 2: benchmark oracle ----------------------------------------------------------------


@criterion(2, "benchmark mean/sigma match brute-force recomputation within 1e-9")
def test_criterion_2_benchmark_oracle(baseline_scenario):
    points = persist.load_points(os.path.join(baseline_scenario["data_dir"], "points.log"))
    by_link = {
        (doc["link"]["host_ip"], doc["link"]["interface"]): doc
        for doc in baseline_scenario["benchmarks"]
    }
    for host_ip, interface, src, capacity in baseline_scenario["monitored"]:
        series = sorted(
            (p.ts_ms, p.value)
            for key, p in points
            if key == SeriesKey("outOctets", host_ip, interface, src)
        )
        # independent recomputation from the journaled counters
        by_hour: dict[int, list[float]] = {}
        for (t0, v0), (t1, v1) in zip(series, series[1:]):
            delta = v1 - v0
            if delta < 0:
                delta += WRAP
            util = delta * 8.0 / ((t1 - t0) / 1000.0) / capacity
            util = min(max(util, 0.0), 1.05)
            by_hour.setdefault((t0 // MS_PER_HOUR) % 24, []).append(util)
        doc = by_link[(host_ip, interface)]
        for row in doc["hours"]:
            vals = by_hour[row["h"]]
            mean = sum(vals) / len(vals)
            sigma = math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))
            assert abs(row["mean"] - mean) < 1e-9, (host_ip, interface, row["h"])
            assert abs(row["sigma"] - sigma) < 1e-9, (host_ip, interface, row["h"])


# -- 3: diurnal recovery -----------------------------------------------------------------


@criterion(3, "diurnal profile recovered: business means in [0.45,0.75], off in [0,0.25]")
def test_criterion_3_diurnal_recovery(baseline_scenario):
    for doc in baseline_scenario["benchmarks"]:
        for row in doc["hours"]:
            if 8 <= row["h"] <= 16:
                assert 0.45 <= row["mean"] <= 0.75, (doc["link"], row)
            else:
                assert 0.0 <= row["mean"] <= 0.25, (doc["link"], row)


# -- 4: envelope fidelity ---------------------------------------------------------------


@criterion(4, "canonical envelope reproduces the reference record exactly")
def test_criterion_4_envelope_fidelity():
    record = encode(filter_metrics(reference_raw_sample(), DEFAULT_ALLOW))
    assert record == REFERENCE_ENVELOPE
    assert list(record) == list(REFERENCE_ENVELOPE)
    assert record["@timestamp"] == "2018-04-07T22:05:24.218Z"
    assert record["timestamp"] == 1523138724218


# -- 5: closed-loop load balancing ----------------------------------------------------------


@criterion(5, "spike confirms on the 3rd flagged sample and the action shifts load")
def test_criterion_5_closed_loop(tmp_path):
    runtime = spike_runtime(tmp_path)
    try:
        congested = ("R1", "FastEthernet0_1")
        alternate = ("R1", "FastEthernet0_2")
        runtime.inject("10.0.1.0/24", "10.0.2.0/24", 3.0, 6)
        inject_start = runtime.now_ms()

        runtime.advance_hours(2)
        assert runtime.trends_document() == []  # two flags are not yet a trend
        state = runtime.trend_states[("10.0.0.11", "FastEthernet0_1")]
        assert state.consecutive_flags == 2

        runtime.advance_hours(1)  # third consecutive flagged sample
        trends = [
            t
            for t in runtime.trends_document()
            if t["link"] == {"host_ip": "10.0.0.11", "interface": "FastEthernet0_1"}
        ]
        assert len(trends) == 1
        trend = trends[0]
        assert trend["started_at_ms"] == inject_start + MS_PER_HOUR
        assert trend["confirmed_at_ms"] == inject_start + 3 * MS_PER_HOUR

        decisions = runtime.decisions_document()
        assert len(decisions) == 1  # the downstream hop's trend plans nothing
        decision = decisions[0]
        assert decision["status"] == "applied"
        assert decision["applied_at_ms"] == trend["confirmed_at_ms"]  # same sample period
        pre_congested = runtime._link_utilization(*congested)
        pre_alternate = runtime._link_utilization(*alternate)
        assert pre_congested == pytest.approx(1.0)

        runtime.advance_hours(1)  # first post-action sample
        post_congested = runtime._link_utilization(*congested)
        post_alternate = runtime._link_utilization(*alternate)
        assert post_congested < pre_congested
        assert post_alternate > pre_alternate
    finally:
        runtime.close()


# -- 6: revert restoration --------------------------------------------------------------------


def run_revert_variant(tmp_path, domain: str):
    if domain == "traditional":
        src, dst = "10.0.1.0/24", "10.0.2.0/24"
    else:
        src, dst = "10.1.1.0/24", "10.1.2.0/24"
    runtime = spike_runtime(tmp_path, domain=domain)
    try:
        snapshot = runtime.net.routing_snapshot()
        runtime.inject(src, dst, 3.0, 6)
        runtime.advance_hours(3)
        (decision,) = runtime.decisions_document()
        assert decision["status"] == "applied"
        assert decision["domain"] == domain
        assert runtime.net.routing_snapshot() != snapshot
        # run out the decision window: applied_at + 6 sample periods
        runtime.advance_hours(6)
        (decision,) = runtime.decisions_document()
        assert decision["status"] == "reverted"
        assert decision["reverted_at_ms"] == decision["applied_at_ms"] + decision["duration_ms"]
        assert runtime.net.routing_snapshot() == snapshot
    finally:
        runtime.close()


@criterion(6, "revert restores the full routing function (SNMP and SDN variants)")
def test_criterion_6_revert_restoration(tmp_path):
    run_revert_variant(tmp_path, "traditional")
    run_revert_variant(tmp_path, "sdn")


# -- 7: no false positives -----------------------------------------------------------------------


@criterion(7, "7 noise-free baseline days after benchmarking: zero flags or actions")
def test_criterion_7_no_false_positives(tmp_path, monkeypatch):
    doc = {"data_dir": str(tmp_path / "data")}
    cfg = build_config(doc)
    for d in cfg.sim.profile["demands"]:
        d["noise_sigma_bps"] = 0.0
    runtime = TrendNetRuntime(cfg)
    try:
        runtime.advance_hours(72)
        runtime.run_benchmark(3)

        flags = []
        real_evaluate = analytics.evaluate_sample

        def spy(bm, acfg, hour, util):
            flagged = real_evaluate(bm, acfg, hour, util)
            flags.append(flagged)
            return flagged

        import trendnet.runtime as runtime_module

        monkeypatch.setattr(runtime_module, "evaluate_sample", spy)
        runtime.advance_hours(7 * 24)
        assert len(flags) == 7 * 24 * 4  # every link evaluated every hour
        assert not any(flags)
        assert runtime.trends_document() == []
        assert runtime.decisions_document() == []
    finally:
        runtime.close()


# -- 8: wrap property ------------------------------------------------------------------------------


@criterion(8, "32-bit wrap: bounded utilizations and 10,000 delta round-trips")
def test_criterion_8_wrap_property():
    rng = random.Random(0xC0FFEE)
    for _ in range(10_000):
        prev = rng.randrange(WRAP)
        true_delta = rng.randrange(WRAP)
        curr = (prev + true_delta) % WRAP
        delta = analytics.counter_delta(prev, curr)
        assert delta == true_delta
        assert (prev + delta) % WRAP == curr

    capacity = 8_000_000
    per_period = capacity * 3600 // 8
    for series_index in range(50):
        counter = rng.randrange(WRAP)
        points, wrapped, ts = [], False, 0
        while not wrapped or len(points) < 30:
            points.append((ts, counter))
            step = rng.randrange(per_period + 1)
            if counter + step >= WRAP:
                wrapped = True
            counter = (counter + step) % WRAP
            ts += MS_PER_HOUR
            if len(points) > 5000:  # safety, never hit in practice
                break
        assert wrapped
        for (t0, v0), (t1, v1) in zip(points, points[1:]):
            util = analytics.compute_utilization(
                analytics.counter_delta(v0, v1), t1 - t0, capacity
            )
            assert 0.0 <= util <= 1.05


# -- 9: pipeline/bus laws ---------------------------------------------------------------------------


@criterion(9, "pipeline/bus property laws over 1000 randomized cases")
def test_criterion_9_pipeline_bus_laws():
    @settings(max_examples=250, deadline=None)
    @given(st.lists(raw_samples(), min_size=1, max_size=15))
    def order_preservation_and_contiguity(samples):
        bus = IngestBus()
        records = [encode(filter_metrics(s, DEFAULT_ALLOW)) for s in samples]
        offsets = [bus.publish("t", r) for r in records]
        assert offsets == list(range(len(records)))
        got, nxt = bus.consume("t", 0, len(records))
        assert got == records and nxt == len(records)

    @settings(max_examples=250, deadline=None)
    @given(st.lists(raw_samples(), min_size=1, max_size=15), st.integers(1, 7))
    def chunked_replay_is_lossless(samples, chunk):
        bus = IngestBus()
        records = [encode(filter_metrics(s, DEFAULT_ALLOW)) for s in samples]
        for r in records:
            bus.publish("t", r)
        collected, offset = [], 0
        while True:
            piece, offset_next = bus.consume("t", offset, chunk)
            if not piece:
                break
            collected.extend(piece)
            offset = offset_next
        assert collected == records
        assert bus.consume("t", 0, chunk)[0] == records[:chunk]  # replayable

    @settings(max_examples=250, deadline=None)
    @given(raw_samples(), st.sets(st.sampled_from(COUNTER_FIELDS), min_size=1))
    def filter_idempotence(sample, allowed):
        allow = MetricAllowList(frozenset(allowed))
        once = filter_metrics(sample, allow)
        assert filter_metrics(once, allow) == once

    @settings(max_examples=250, deadline=None)
    @given(raw_samples())
    def encode_decode_roundtrip(sample):
        filtered = filter_metrics(sample, DEFAULT_ALLOW)
        assert decode(encode(filtered)) == filtered

    order_preservation_and_contiguity()
    chunked_replay_is_lossless()
    filter_idempotence()
    encode_decode_roundtrip()


# -- 10: persistence across restart -------------------------------------------------------------------


@criterion(10, "service restart preserves reads and resumes the event stream")
def test_criterion_10_restart(tmp_path):
    from test_service import SSECollector, quiet_config, read_endpoints, run_spike_scenario

    data_dir = str(tmp_path / "data")
    runtime = TrendNetRuntime(quiet_config(data_dir))
    server = start_server(runtime)
    base = f"http://127.0.0.1:{server.port}"
    client = httpx.Client(base_url=base + "/api/v1", timeout=30.0)
    collector = SSECollector(base)
    assert collector.connected.wait(5.0)
    run_spike_scenario(client)
    before = read_endpoints(client)
    assert any(d["status"] == "applied" for d in before["decisions"])  # mid-scenario
    assert collector.wait_for(lambda evs: any(e["kind"] == "decision" for e in evs))
    pre_restart_seq = max(e["seq"] for e in collector.events)
    client.close()
    server.shutdown_server()

    runtime2 = TrendNetRuntime(quiet_config(data_dir))
    server2 = start_server(runtime2)
    base2 = f"http://127.0.0.1:{server2.port}"
    client2 = httpx.Client(base_url=base2 + "/api/v1", timeout=30.0)
    try:
        assert read_endpoints(client2) == before
        collector2 = SSECollector(base2)
        assert collector2.connected.wait(5.0)
        client2.post("/sim/advance", json={"hours": 1})
        assert collector2.wait_for(lambda evs: len(evs) > 0)
        assert min(e["seq"] for e in collector2.events) > pre_restart_seq
        seqs = [e["seq"] for e in collector2.events]
        assert seqs == sorted(seqs)
    finally:
        client2.close()
        server2.shutdown_server()
