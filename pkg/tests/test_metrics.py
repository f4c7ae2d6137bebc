"""Window metrics against brute-force recomputation on small traces."""
from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesim.metrics import (
    app_metrics,
    egress_cost,
    link_utilization,
    make_window,
    nearest_rank,
    network_metrics,
    node_utilization,
    placement_cost,
    response_p95,
    unsuccessful_requests,
)
from edgesim.rationals import frac

from .conftest import (
    chain_app_doc,
    cluster_doc,
    echo_app_doc,
    line_topology_doc,
    make_engine,
    user_doc,
)


def busy_engine(horizon=120, demand="1", period="30"):
    eng = make_engine(
        users=[user_doc("echo", "a-worker-0", period=period)],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "c-worker-0"}])
    eng.run_until(horizon)
    return eng


# ---- nearest-rank percentile --------------------------------------------------


def test_percentile_single_sample():
    assert nearest_rank([frac(10)], frac("0.95")) == 10


def test_percentile_homogeneous_samples():
    samples = [frac("35.60")] * 20
    assert nearest_rank(samples, frac("0.50")) == frac("35.60")
    assert nearest_rank(samples, frac("0.95")) == frac("35.60")


def test_percentile_1_to_100():
    samples = [frac(i) for i in range(1, 101)]
    assert nearest_rank(samples, frac("0.95")) == 95


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=10 ** 6), min_size=1,
                max_size=100))
def test_percentile_matches_sort_and_index_oracle(values):
    samples = [frac(v) for v in values]
    ordered = sorted(samples)
    for q in ("0.50", "0.95", "1"):
        idx = math.ceil(float(frac(q)) * len(ordered))
        expect = ordered[max(idx, 1) - 1]
        assert nearest_rank(samples, frac(q)) == expect


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=10 ** 6), min_size=1,
                max_size=60))
def test_percentile_monotone_in_q(values):
    samples = [frac(v) for v in values]
    p50 = nearest_rank(samples, frac("0.50"))
    p95 = nearest_rank(samples, frac("0.95"))
    assert p50 <= p95 <= max(samples)


def test_empty_window_percentile_is_absent():
    eng = busy_engine()
    # nothing completes in a window before the first request finishes
    assert response_p95(eng, "echo", make_window(1, 2)) is None


def test_response_p95_matches_trace_oracle():
    eng = busy_engine(horizon=400)
    window = make_window(0, 400)
    samples = sorted(t.response_time for t in eng.traces
                     if t.succeeded and 0 <= t.completion < 400)
    expect = samples[math.ceil(0.95 * len(samples)) - 1]
    assert response_p95(eng, "echo", window) == expect


# ---- success / failure counts ---------------------------------------------------


def test_unsuccessful_zero_when_all_complete():
    eng = busy_engine(horizon=400)
    # emissions 0..360 all complete by 389.44; the t=390 one is in flight
    assert unsuccessful_requests(eng, "echo", make_window(0, 390)) == 0
    assert unsuccessful_requests(eng, "echo", make_window(0, 450)) == 1


def test_unsuccessful_counts_in_window_emissions_minus_completions():
    eng = busy_engine(horizon=200)
    window = make_window(0, 100)
    emitted = sum(1 for t in eng.traces if 0 <= t.emit_time < 100)
    completed = sum(1 for t in eng.traces
                    if t.succeeded and 0 <= t.completion < 100)
    assert unsuccessful_requests(eng, "echo", window) == \
        max(emitted - completed, 0)
    assert unsuccessful_requests(eng, "echo", window) == 1


def test_unsuccessful_clamps_at_zero_on_carryover():
    # both users emit at t=0; FIFO finishes them at 2 and 4, inside [1, 10)
    eng = make_engine(
        app_docs=[echo_app_doc(demand="2", size=0)],
        users=[user_doc("echo", "a-worker-0"),
               user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "a-worker-0"}])
    eng.run_until(20)
    window = make_window(1, 10)
    emitted = sum(1 for t in eng.traces if 1 <= t.emit_time < 10)
    completed = sum(1 for t in eng.traces
                    if t.succeeded and 1 <= t.completion < 10)
    assert (emitted, completed) == (0, 2)
    assert unsuccessful_requests(eng, "echo", window) == 0


def test_count_additivity_across_adjacent_windows():
    eng = busy_engine(horizon=600)
    for a, b, c in ((0, 100, 200), (0, 250, 600), (30, 60, 90)):
        whole = unsuccessful_requests(eng, "echo", make_window(a, c))
        # additivity holds for raw totals, not the clamped difference
        def totals(w):
            emitted = sum(1 for t in eng.traces
                          if w.t_start <= t.emit_time < w.t_end)
            done = sum(1 for t in eng.traces
                       if t.succeeded and w.t_start <= t.completion < w.t_end)
            return emitted, done
        e1, d1 = totals(make_window(a, b))
        e2, d2 = totals(make_window(b, c))
        ew, dw = totals(make_window(a, c))
        assert (e1 + e2, d1 + d2) == (ew, dw)
        assert whole == max(ew - dw, 0)


# ---- utilizations ----------------------------------------------------------------


def test_node_utilization_idle_is_zero():
    eng = busy_engine()
    assert node_utilization(eng, "b-worker-0", make_window(0, 100)) == 0


def test_node_utilization_formula():
    eng = busy_engine(horizon=200)
    window = make_window(0, 100)
    busy = sum((rec.end - rec.start for rec in eng.service_log
                if rec.node == "c-worker-0" and 0 <= rec.end < 100),
               frac(0))
    assert node_utilization(eng, "c-worker-0", window) == busy / 100


def test_node_utilization_saturated_single_server():
    # demand 30 = period: the server is busy the entire window
    eng = make_engine(
        app_docs=[echo_app_doc(demand="30", size=0)],
        users=[user_doc("echo", "a-worker-0", period="30")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "a-worker-0"}])
    eng.run_until(400)
    assert node_utilization(eng, "a-worker-0", make_window(30, 330)) == 1


def test_link_utilization_formula():
    eng = busy_engine(horizon=200)
    window = make_window(0, 100)
    link = "a-cp|b-cp"
    size = sum((rec.size for rec in eng.transmissions
                if rec.link == link and 0 <= rec.end < 100), frac(0))
    bandwidth = eng.topology.link_by_key[link].bandwidth
    assert link_utilization(eng, link, window) == (size / 100) / bandwidth


def test_link_utilization_idle_is_zero():
    eng = busy_engine()
    assert link_utilization(eng, "b-cp|c-cp", make_window(0, 1)) == 0


def test_congestion_threshold_is_strict():
    eng = busy_engine(horizon=200)
    window = make_window(0, 100)
    nm = network_metrics(eng, window, link_threshold=
                         link_utilization(eng, "a-cp|b-cp", window))
    assert "a-cp|b-cp" not in nm["congested_candidates"]


# ---- costs -------------------------------------------------------------------------


def test_placement_cost_sums_node_costs():
    doc = line_topology_doc()
    doc["clusters"][0]["nodes"][1]["cost"] = "0.01"   # a-worker-0, cdc-like
    doc["clusters"][1]["nodes"][1]["cost"] = "0.30"   # b-worker-0, mec-like
    doc["clusters"][2]["nodes"][1]["cost"] = "0.30"
    eng = make_engine(topology_doc=doc, users=[], placements=[])
    assert placement_cost(eng) == 0
    eng.deploy_vnf("echo", "echo-s1", "a-worker-0")
    assert placement_cost(eng) == frac("0.01")
    eng.replicate_vnf("echo", "echo-s1", "b-worker-0")
    eng.replicate_vnf("echo", "echo-s1", "c-worker-0")
    assert placement_cost(eng) == frac("0.61")
    assert placement_cost(eng, "echo") == frac("0.61")


def test_egress_cost_intra_region_is_zero():
    eng = busy_engine(horizon=200)   # single-region topology
    rates = {"region-a": {"region-a": "0.2"}}
    assert egress_cost(eng, make_window(0, 100), rates) == {}


def test_egress_cost_applies_rate_table():
    doc = line_topology_doc()
    doc["clusters"][2]["region"] = "region-b"
    eng = make_engine(
        topology_doc=doc,
        app_docs=[echo_app_doc(size=10, demand="1")],
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "c-worker-0"}])
    eng.run_until(100)
    rates = {"region-a": {"region-b": "0.2"}, "region-b": {"region-a": "0.5"}}
    window = make_window(0, 100)
    costs = egress_cost(eng, window, rates)
    crossing_ab = sum((rec.size for rec in eng.transmissions
                       if rec.link == "b-cp|c-cp" and 0 <= rec.end < 100
                       and rec.src == "b-cp"), frac(0))
    crossing_ba = sum((rec.size for rec in eng.transmissions
                       if rec.link == "b-cp|c-cp" and 0 <= rec.end < 100
                       and rec.src == "c-cp"), frac(0))
    assert costs[("region-a", "region-b")] == crossing_ab * frac("0.2")
    assert costs[("region-b", "region-a")] == crossing_ba * frac("0.5")
    assert costs[("region-a", "region-b")] != costs[("region-b", "region-a")]


# ---- summary ------------------------------------------------------------------------


def test_app_summary_decomposition_is_exact():
    eng = busy_engine(horizon=400)
    summary = app_metrics(eng, "echo", make_window(0, 400))
    assert summary["response_mean"] == (summary["network_mean"] +
                                        summary["processing_mean"] +
                                        summary["waiting_mean"])
    assert summary["response_p50"] <= summary["response_p95"] \
        <= summary["response_max"]


def test_summary_means_cover_successful_requests_only():
    eng = make_engine(users=[user_doc("echo", "a-worker-0")], placements=[])
    eng.deploy_vnf("echo", "echo-s1", "c-worker-0")
    eng.run_until(200)
    summary = app_metrics(eng, "echo", make_window(0, 200))
    done = [t for t in eng.traces if t.succeeded and 0 <= t.completion < 200]
    expect = sum(t.response_time for t in done) / len(done)
    assert summary["response_mean"] == expect


def test_metrics_recomputation_is_pure():
    eng = busy_engine(horizon=300)
    window = make_window(0, 300)
    first = app_metrics(eng, "echo", window)
    second = app_metrics(eng, "echo", window)
    assert first == second
    assert node_utilization(eng, "c-worker-0", window) == \
        node_utilization(eng, "c-worker-0", window)
