from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trendnet.collector import RawSample
from trendnet.netsim import CounterSet
from trendnet.pipeline import DEFAULT_ALLOW, IngestBus, encode, filter_metrics
from trendnet.tsdb import DataPoint, IngestBridge, SeriesKey, TimeSeriesStore, aggregate

KEY = SeriesKey("outOctets", "10.0.0.11", "FastEthernet0_1", "collectd")
HOUR = 3_600_000


def test_append_then_query_identity():
    store = TimeSeriesStore()
    store.append(KEY, DataPoint(1000, 5.0))
    assert store.query(KEY, 0, 2000) == [DataPoint(1000, 5.0)]


def test_double_append_is_idempotent():
    store = TimeSeriesStore()
    store.append(KEY, DataPoint(1000, 5.0))
    store.append(KEY, DataPoint(1000, 5.0))
    assert store.query(KEY, 0, 2000) == [DataPoint(1000, 5.0)]


def test_same_ts_replaces_value():
    store = TimeSeriesStore()
    store.append(KEY, DataPoint(1000, 5.0))
    store.append(KEY, DataPoint(1000, 7.0))
    assert store.query(KEY, 0, 2000) == [DataPoint(1000, 7.0)]


def test_query_empty_store_and_unknown_series():
    store = TimeSeriesStore()
    assert store.query(KEY, 0, 10) == []


def test_query_half_open_boundaries():
    store = TimeSeriesStore()
    for ts in (10, 20, 30, 40):
        store.append(KEY, DataPoint(ts, float(ts)))
    assert [p.ts_ms for p in store.query(KEY, 10, 40)] == [10, 20, 30]
    assert store.query(KEY, 25, 25) == []


def test_query_results_ascending_regardless_of_insert_order():
    store = TimeSeriesStore()
    for ts in (30, 10, 40, 20):
        store.append(KEY, DataPoint(ts, float(ts)))
    assert [p.ts_ms for p in store.query(KEY, 0, 100)] == [10, 20, 30, 40]


def test_non_finite_value_rejected():
    store = TimeSeriesStore()
    with pytest.raises(ValueError):
        store.append(KEY, DataPoint(0, float("nan")))


@settings(max_examples=200, deadline=None)
@given(
    ts_values=st.lists(st.tuples(st.integers(0, 10_000), st.floats(-1e9, 1e9)), max_size=40),
    t0=st.integers(0, 10_000),
    t1=st.integers(0, 10_000),
    t2=st.integers(0, 10_000),
)
def test_half_open_range_law(ts_values, t0, t1, t2):
    t0, t1, t2 = sorted((t0, t1, t2))
    store = TimeSeriesStore()
    for ts, v in ts_values:
        store.append(KEY, DataPoint(ts, v))
    combined = store.query(KEY, t0, t1) + store.query(KEY, t1, t2)
    assert combined == store.query(KEY, t0, t2)


# -- aggregate ---------------------------------------------------------------


def test_aggregate_mean_of_constant_series():
    points = [DataPoint(t * HOUR + 60_000, 0.4) for t in range(5)]
    out = aggregate(points, HOUR, "mean")
    assert [p.value for p in out] == [0.4] * 5


def test_aggregate_hourly_mean_hand_case():
    nine_ten = 9 * HOUR + 10 * 60_000
    nine_forty = 9 * HOUR + 40 * 60_000
    out = aggregate([DataPoint(nine_ten, 0.2), DataPoint(nine_forty, 0.4)], HOUR, "mean")
    assert out == [DataPoint(9 * HOUR, pytest.approx(0.3))]


def test_aggregate_sum_hand_case():
    points = [DataPoint(10, 1.0), DataPoint(20, 2.0), DataPoint(30, 3.0)]
    assert aggregate(points, 1000, "sum") == [DataPoint(0, 6.0)]


def test_aggregate_max_and_empty_bucket_omission():
    points = [DataPoint(0, 1.0), DataPoint(2 * HOUR, 5.0)]
    out = aggregate(points, HOUR, "max")
    assert out == [DataPoint(0, 1.0), DataPoint(2 * HOUR, 5.0)]  # hour 1 omitted


@settings(max_examples=200, deadline=None)
@given(
    points=st.lists(
        st.builds(DataPoint, st.integers(0, 100_000), st.floats(-1e6, 1e6)), max_size=50
    ),
    bucket=st.integers(1, 10_000),
)
def test_aggregation_conserves_count(points, bucket):
    # dedupe timestamps the way the store would
    dedup = {p.ts_ms: p for p in points}.values()
    out = aggregate(dedup, bucket, "sum")
    buckets = {(p.ts_ms // bucket) * bucket for p in dedup}
    assert {p.ts_ms for p in out} == buckets


# -- ingest bridge ----------------------------------------------------------------


def sample_record(ts_ms=1523138724218, host="10.0.0.10", outoctets=18102066):
    counters = CounterSet(
        inOctets=18050215, outOctets=outoctets, inPkts=77062, outPkts=77063
    )
    raw = RawSample("collectd", host, "FastEthernet0_1", counters, ts_ms)
    return encode(filter_metrics(raw, DEFAULT_ALLOW))


def test_bridge_explodes_record_into_six_points():
    bus, store = IngestBus(), TimeSeriesStore()
    bus.publish("collectd", sample_record())
    bridge = IngestBridge(bus, store, ["collectd"])
    assert bridge.drain() == 6
    for metric, expected in (
        ("outOctets", 18102066.0),
        ("inOctets", 18050215.0),
        ("inPkts", 77062.0),
        ("outPkts", 77063.0),
        ("inDiscards", 0.0),
        ("outDiscards", 0.0),
    ):
        key = SeriesKey(metric, "10.0.0.10", "FastEthernet0_1", "collectd")
        assert store.query(key, 0, 2**63) == [DataPoint(1523138724218, expected)]


def test_bridge_restart_is_lossless_and_deduplicated():
    bus, store = IngestBus(), TimeSeriesStore()
    for i in range(10):
        bus.publish("collectd", sample_record(ts_ms=1000 + i))
    bridge = IngestBridge(bus, store, ["collectd"], batch_size=3)
    bridge.drain()
    offsets = dict(bridge.offsets)
    key = SeriesKey("outOctets", "10.0.0.10", "FastEthernet0_1", "collectd")
    assert store.count(key) == 10

    # a replacement bridge starting from zero replays everything; the store
    # converges to the same contents
    replayer = IngestBridge(bus, store, ["collectd"], batch_size=4)
    replayer.drain()
    assert store.count(key) == 10
    assert offsets == {"collectd": 10}


def test_bridge_empty_topic_appends_nothing():
    bus, store = IngestBus(), TimeSeriesStore()
    bridge = IngestBridge(bus, store, ["collectd", "sdn"])
    assert bridge.drain() == 0


def test_bridge_commits_only_after_append(monkeypatch):
    bus, store = IngestBus(), TimeSeriesStore()
    bus.publish("collectd", sample_record())
    bridge = IngestBridge(bus, store, ["collectd"])

    def boom(key, point):
        raise RuntimeError("store down")

    monkeypatch.setattr(store, "append", boom)
    with pytest.raises(RuntimeError):
        bridge.drain()
    assert bridge.offsets["collectd"] == 0  # no advance on failure
