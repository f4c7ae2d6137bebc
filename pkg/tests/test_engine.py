"""Event core: clock, request lifecycle, queues, transmission, placement."""
from __future__ import annotations

import math

import pytest

from edgesim.engine import CapacityError, Engine, EngineError
from edgesim.rationals import frac

from .conftest import (
    chain_app_doc,
    cluster_doc,
    echo_app_doc,
    line_topology_doc,
    make_engine,
    user_doc,
)


def test_run_until_fast_forwards_empty_queue():
    eng = make_engine(users=[], placements=[])
    clock = eng.run_until(100)
    assert clock == 100
    assert eng.clock == 100
    assert eng.requests_total == 0


def test_run_until_rejects_rewind():
    eng = make_engine(users=[], placements=[])
    eng.run_until(50)
    with pytest.raises(EngineError):
        eng.run_until(10)


def test_deterministic_user_emits_on_period_grid():
    eng = make_engine(
        users=[user_doc("echo", "a-worker-0", period=30)],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "a-worker-0"}])
    eng.run_until(100)
    emits = sorted(t.emit_time for t in eng.traces)
    assert emits == [0, 30, 60, 90]


def test_same_time_events_run_in_insertion_order():
    eng = make_engine(
        users=[user_doc("echo", "a-worker-0"),
               user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "a-worker-0"}])
    eng.run_until(10)
    # both emit at t=0; the first-registered user's request is served first
    first, second = sorted(eng.traces, key=lambda t: t.request_id)[:2]
    assert first.user < second.user
    assert first.visits[0].start <= second.visits[0].start


# ---- single-server FIFO ------------------------------------------------------


def test_fifo_second_arrival_waits_for_first():
    # co-located user and VNF: no network legs, pure queueing
    eng = make_engine(
        app_docs=[echo_app_doc(demand="2", size=0)],
        users=[user_doc("echo", "a-worker-0"),
               user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "a-worker-0"}])
    eng.run_until(30)
    done = sorted(eng.traces, key=lambda t: t.request_id)[:2]
    assert [t.completion for t in done] == [2, 4]
    assert [t.waiting_time for t in done] == [0, 2]
    assert all(t.processing_time == 2 for t in done)


def test_idle_deployment_serves_without_waiting():
    eng = make_engine(
        app_docs=[echo_app_doc(demand="3", size=0)],
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "a-worker-0"}])
    eng.run_until(30)
    trace = eng.traces[0]
    assert trace.waiting_time == 0
    assert trace.response_time == 3


# ---- transmission ------------------------------------------------------------


def _inter_hops(trace):
    return [h for h in trace.hops if "|" in h.link and
            not h.link.split("|")[0].rsplit("-", 1)[0] ==
            h.link.split("|")[1].rsplit("-", 1)[0]]


def test_transmit_duration_is_size_over_bandwidth_plus_latency():
    doc = line_topology_doc(latencies=(5, 7), bandwidth=10)
    eng = make_engine(
        topology_doc=doc,
        app_docs=[echo_app_doc(size=10, demand="1")],
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "b-worker-0"}])
    eng.run_until(29)
    trace = eng.traces[0]
    inter = [h for h in trace.hops if h.link == "a-cp|b-cp"]
    assert inter, trace.hops
    # 10/10 + 5
    assert all(h.duration == 6 for h in inter)
    # intra edges run at 10x the largest inter bandwidth: 10/100 + 1
    intra = [h for h in trace.hops if h.link == "a-worker-0|a-cp"]
    assert all(h.duration == frac("1.1") for h in intra)


def test_concurrent_transfers_share_bandwidth_fairly():
    doc = line_topology_doc(latencies=(5, 7), bandwidth=10)
    eng = make_engine(
        topology_doc=doc,
        app_docs=[echo_app_doc(size=10, demand="1")],
        users=[user_doc("echo", "a-worker-0"),
               user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "b-worker-0"}])
    eng.run_until(29)
    durations = []
    for trace in sorted(eng.traces, key=lambda t: t.request_id)[:2]:
        hops = [h for h in trace.hops if h.link == "a-cp|b-cp"]
        durations.extend(h.duration for h in hops[:1])
    # both requests cross together: 10/(10/2) + 5 = 7 each
    assert durations == [7, 7]


def test_zero_size_message_costs_only_latency():
    doc = line_topology_doc(latencies=(5, 7), bandwidth=10)
    eng = make_engine(
        topology_doc=doc,
        app_docs=[echo_app_doc(size=0, demand="1")],
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "b-worker-0"}])
    eng.run_until(29)
    trace = eng.traces[0]
    inter = [h for h in trace.hops if h.link == "a-cp|b-cp"]
    assert all(h.duration == 5 for h in inter)


# ---- routing -----------------------------------------------------------------


def test_nearer_replica_is_chosen():
    eng = make_engine(
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "a-worker-0"},
                    {"app": "echo", "vnf": "echo-s1", "node": "c-worker-0"}])
    eng.run_until(10)
    trace = eng.traces[0]
    assert trace.visits[0].node == "a-worker-0"


def test_missing_stage_counts_unsuccessful():
    eng = make_engine(users=[user_doc("echo", "a-worker-0")], placements=[])
    eng.run_until(31)
    assert eng.requests_unsuccessful >= 1
    assert eng.traces[0].failure == "missing stage"
    assert not eng.traces[0].succeeded


def test_failed_node_triggers_reroute_to_replica():
    eng = make_engine(
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "b-worker-0"},
                    {"app": "echo", "vnf": "echo-s1", "node": "c-worker-0"}])
    eng.run_until(1)
    eng.fail_node("b-worker-0")
    eng.run_until(61)
    served_nodes = {v.node for t in eng.traces if t.succeeded
                    for v in t.visits}
    later = [t for t in eng.traces if t.emit_time >= 30]
    assert later and all(t.succeeded for t in later)
    assert {v.node for t in later for v in t.visits} == {"c-worker-0"}
    assert "c-worker-0" in served_nodes


def test_isolated_app_records_no_path():
    doc = {"clusters": [cluster_doc("a"), cluster_doc("b")], "links": []}
    eng = make_engine(
        topology_doc=doc,
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "b-worker-0"}])
    eng.run_until(1)
    assert eng.traces[0].failure in ("no path", "node_failure")
    assert eng.requests_unsuccessful == 1


# ---- placement operations -----------------------------------------------------


def test_deploy_and_replicate_count_deployments():
    eng = make_engine(users=[], placements=[])
    d1 = eng.deploy_vnf("echo", "echo-s1", "a-worker-0")
    d2 = eng.replicate_vnf("echo", "echo-s1", "b-worker-0")
    assert d1 != d2
    assert len(eng.active_deployments()) == 2


def test_move_keeps_count_and_switches_node():
    eng = make_engine(users=[], placements=[])
    d1 = eng.deploy_vnf("echo", "echo-s1", "a-worker-0")
    d2 = eng.move_vnf(d1, "c-worker-0")
    active = eng.active_deployments()
    assert len(active) == 1
    assert active[0].node == "c-worker-0"
    assert active[0].id == d2


def test_capacity_overflow_rejected():
    doc = line_topology_doc()
    doc["clusters"][0]["nodes"][1]["capacity"] = {"cpu": 1}
    eng = make_engine(topology_doc=doc, users=[], placements=[])
    eng.deploy_vnf("echo", "echo-s1", "a-worker-0")
    with pytest.raises(CapacityError, match="capacity"):
        eng.deploy_vnf("echo", "echo-s1", "a-worker-0")


def test_removing_last_stage_deployment_is_flagged():
    eng = make_engine(users=[], placements=[])
    dep = eng.deploy_vnf("echo", "echo-s1", "a-worker-0")
    eng.remove_vnf(dep)
    assert any("last deployment" in w for w in eng.warnings)


def test_deploy_on_down_node_rejected():
    eng = make_engine(users=[], placements=[])
    eng.fail_node("a-worker-0")
    with pytest.raises(EngineError):
        eng.deploy_vnf("echo", "echo-s1", "a-worker-0")


# ---- users --------------------------------------------------------------------


def test_spawn_user_on_down_node_rejected():
    eng = make_engine(users=[], placements=[])
    eng.fail_node("a-worker-0")
    from edgesim.workload import load_users
    spec = load_users([user_doc("echo", "a-worker-0")])[0]
    with pytest.raises(EngineError, match="unavailable|down"):
        eng.spawn_user(spec)


def test_move_user_redirects_future_requests():
    eng = make_engine(
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "b-worker-0"}])
    eng.run_until(1)
    uid = eng.active_users()[0].id
    eng.move_user(uid, "c-worker-0")
    eng.run_until(61)
    later = [t for t in eng.traces if t.emit_time >= 30]
    assert later
    assert all(t.path_nodes[0] == "c-worker-0" for t in later)


def test_remove_user_is_idempotent_with_warning():
    eng = make_engine(
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "b-worker-0"}])
    uid = eng.active_users()[0].id
    eng.remove_user(uid)
    assert eng.active_users() == []
    eng.remove_user(uid)
    assert any(uid in w for w in eng.warnings)


# ---- processes -----------------------------------------------------------------


def _hotspot_engine(seed=0):
    process = {"name": "hs", "kind": "hotspot_users", "enabled": True,
               "distribution": {"type": "deterministic", "time": 10},
               "params": {"app_ref": "echo", "node": "a-worker-0",
                          "neighbor_node": "b-worker-0",
                          "times": [100, 200, 300], "count": 60,
                          "remove_fraction": "0.4",
                          "generation": {"type": "deterministic",
                                         "time": 30}}}
    from edgesim.workload import load_processes
    return make_engine(
        users=[],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "c-worker-0"}],
        processes=load_processes([process]), seed=seed)


def test_hotspot_timeline_create_relocate_remove():
    eng = _hotspot_engine()
    eng.run_until(150)
    assert len(eng.active_users()) == 60
    assert all(u.node == "a-worker-0" for u in eng.active_users())

    eng.run_until(250)
    assert all(u.node == "b-worker-0" for u in eng.active_users())

    eng.run_until(350)
    removed = 60 - len(eng.active_users())
    assert removed == math.ceil(0.4 * 60) == 24


def test_hotspot_removal_takes_lowest_user_ids():
    eng = _hotspot_engine()
    eng.run_until(250)
    before = sorted(u.id for u in eng.active_users())
    eng.run_until(350)
    after = sorted(u.id for u in eng.active_users())
    assert after == before[24:]


def test_mobility_frequencies_match_probabilities():
    # Listing-2 style params: create 0.10, move 0.80, remaining 0.10 no-op.
    trials = 10_000
    process = {"name": "mob", "kind": "user_mobility_random", "enabled": True,
               "distribution": {"type": "deterministic", "time": 1},
               "params": {"app_ref": "echo",
                          "create_probability": "0.10",
                          "move_probability": "0.80",
                          "nodes": ["a-worker-0", "b-worker-0",
                                    "c-worker-0"],
                          "generation": {"type": "deterministic",
                                         "time": 10 ** 9}}}
    from edgesim.workload import load_processes
    eng = make_engine(
        users=[user_doc("echo", "a-worker-0", period=10 ** 9)],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "c-worker-0"}],
        processes=load_processes([process]), seed=123)
    eng.run_until(trials + 1)
    ticks = [entry[3] for entry in eng.event_log
             if entry[2] == "process_tick"]
    creates = sum(1 for s in ticks if "@" in s)
    moves = sum(1 for s in ticks if "->" in s)
    noops = sum(1 for s in ticks if s == "noop")
    assert creates + moves + noops == trials
    assert abs(creates / trials - 0.10) < 0.02
    assert abs(moves / trials - 0.80) < 0.02


# ---- invariants -----------------------------------------------------------------


def test_conservation_holds_mid_run():
    eng = make_engine(
        users=[user_doc("echo", "a-worker-0"),
               user_doc("echo", "b-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "c-worker-0"}])
    for stop in (7, 31, 50, 95, 200):
        eng.run_until(stop)
        assert eng.check_conservation()


def test_clock_never_rewinds_in_event_log():
    eng = make_engine(
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "c-worker-0"}])
    eng.run_until(200)
    times = [frac(entry[0]) for entry in eng.event_log]
    assert times == sorted(times)


def test_identical_seed_identical_digest():
    def build():
        return make_engine(
            users=[user_doc("echo", "a-worker-0"),
                   user_doc("echo", "b-worker-0")],
            placements=[{"app": "echo", "vnf": "echo-s1",
                         "node": "c-worker-0"}],
            seed=42)
    e1, e2 = build(), build()
    e1.run_until(500)
    e2.run_until(500)
    assert e1.digest() == e2.digest()


def test_different_seed_changes_nothing_for_deterministic_workload():
    # all-deterministic scenario: seed affects nothing observable
    def run(seed):
        eng = make_engine(
            users=[user_doc("echo", "a-worker-0")],
            placements=[{"app": "echo", "vnf": "echo-s1",
                         "node": "c-worker-0"}],
            seed=seed)
        eng.run_until(300)
        return [t.to_record() for t in eng.traces]
    assert run(1) == run(2)


def test_snapshot_runtime_counters():
    eng = make_engine(
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "c-worker-0"}])
    snap = eng.snapshot_runtime()
    assert snap["users"] == 1
    assert snap["deployments"] == 1
    assert snap["down_nodes"] == []
    eng.fail_node("b-cp")
    snap = eng.snapshot_runtime()
    assert snap["down_nodes"] == ["b-cp"]
    assert snap["unreachable_links"] > 0
