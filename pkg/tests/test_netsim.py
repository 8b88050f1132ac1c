import numpy as np
import pytest

from covtrack.netsim import (Message, NeighborGraph, TrafficLedger,
                             bandwidth_model, build_graph,
                             connectivity_check, exchange_round,
                             payload_bytes)


def test_payload_bytes_arithmetic():
    assert payload_bytes() == 0
    assert payload_bytes(coord_pairs=1) == 8
    assert payload_bytes(target_records=1) == 12
    assert payload_bytes(scalars=3) == 24
    assert payload_bytes(coord_pairs=2, target_records=5, scalars=1) == 84


def test_bandwidth_model_reference_rates():
    # one coordinate pair to each of 6 neighbors at 1 Hz
    assert bandwidth_model("power", 6, 10) == 48.0
    assert bandwidth_model("voronoi", 6, 10) == 48.0
    # plus one record per detected target for the capacity-constrained mode
    assert bandwidth_model("ccvd", 6, 10) == 768.0
    assert bandwidth_model("ccvd", 6, 0) == 48.0
    assert bandwidth_model("power", 6, 10, hz=2.0) == 96.0
    with pytest.raises(ValueError):
        bandwidth_model("zigzag", 6, 10)


def test_graph_validation():
    with pytest.raises(ValueError):
        NeighborGraph(2, frozenset({(1, 0)}))      # i >= j
    with pytest.raises(ValueError):
        NeighborGraph(2, frozenset({(0, 2)}))      # out of range
    with pytest.raises(ValueError):
        NeighborGraph(3, frozenset({(1, 1)}))      # self loop


def test_graph_queries():
    g = NeighborGraph(4, frozenset({(0, 1), (1, 2), (0, 3)}))
    assert g.neighbors(0) == [1, 3]
    assert g.neighbors(2) == [1]
    assert g.degree(1) == 2 and g.degree(2) == 1
    assert g.max_degree() == 2
    assert g.has_edge(1, 0) and g.has_edge(0, 1)
    assert not g.has_edge(0, 2) and not g.has_edge(1, 1)
    assert g.edge_list() == [(0, 1), (0, 3), (1, 2)]
    adj = g.adjacency()
    assert adj.sum() == 6 and np.array_equal(adj, adj.T)


def test_complete_graph():
    g = NeighborGraph.complete(5)
    assert len(g.edges) == 10
    assert g.max_degree() == 4
    assert connectivity_check(g)


def test_build_graph_matches_brute_force():
    rng = np.random.default_rng(19)
    for _ in range(30):
        n = int(rng.integers(1, 12))
        pos = rng.uniform(0, 20, size=(n, 2))
        radius = float(rng.uniform(2, 15))
        g = build_graph(pos, radius)
        for i in range(n):
            for j in range(i + 1, n):
                d = np.hypot(*(pos[i] - pos[j]))
                assert g.has_edge(i, j) == (d <= radius), (i, j)


def test_connectivity_check():
    assert connectivity_check(NeighborGraph(1, frozenset()))
    assert connectivity_check(NeighborGraph(0, frozenset()))
    ring = NeighborGraph(4, frozenset({(0, 1), (1, 2), (2, 3)}))
    assert connectivity_check(ring)
    split = NeighborGraph(4, frozenset({(0, 1), (2, 3)}))
    assert not connectivity_check(split)


def test_exchange_round_delivery_and_drops():
    g = NeighborGraph(3, frozenset({(0, 1)}))
    ledger = TrafficLedger()
    out = {
        0: [Message(0, 1, "state", "a", 8), Message(0, 2, "state", "b", 8)],
        1: [Message(1, 0, "state", "c", 12)],
    }
    inboxes = exchange_round(g, out, ledger)
    assert [m.payload for m in inboxes[1]] == ["a"]
    assert [m.payload for m in inboxes[0]] == ["c"]
    assert inboxes[2] == []          # 0 -> 2 dropped: not neighbors
    assert ledger.dropped == 1
    assert ledger.robot_bytes(0) == 8 and ledger.robot_bytes(1) == 12


def test_exchange_round_sender_mismatch():
    g = NeighborGraph.complete(2)
    with pytest.raises(ValueError):
        exchange_round(g, {0: [Message(1, 0, "x", None, 4)]})


def test_exchange_round_inbox_order():
    # inboxes sort by sender regardless of outbox dict insertion order
    g = NeighborGraph.complete(4)
    msgs = {i: [Message(i, 3, "m", i, 4)] for i in (2, 0, 1)}
    inbox = exchange_round(g, msgs)[3]
    assert [m.sender for m in inbox] == [0, 1, 2]
    shuffled = {i: msgs[i] for i in (1, 2, 0)}
    inbox2 = exchange_round(g, shuffled)[3]
    assert [m.sender for m in inbox2] == [0, 1, 2]


def test_ledger_accumulation_and_rows():
    led = TrafficLedger()
    led.set_step(0)
    led.record(0, "consensus", 16, messages=2)
    led.record(0, "consensus", 8)
    led.set_step(1)
    led.record(1, "swap-state", 40)
    led.record(0, "consensus", 8)
    assert led.rows() == [
        (0, 0, "consensus", 24, 3),
        (1, 0, "consensus", 8, 1),
        (1, 1, "swap-state", 40, 1),
    ]
    assert led.robot_bytes(0) == 32
    assert led.rate_per_second(0, 2.0) == 16.0
    with pytest.raises(ValueError):
        led.rate_per_second(0, 0.0)


def test_ledger_reproduces_survey_rates():
    # a robot with 6 neighbors broadcasting once per second for 10 s
    g = NeighborGraph.complete(7)
    led = TrafficLedger()
    for step in range(10):
        led.set_step(step)
        out = {0: [Message(0, j, "generator", None, payload_bytes(coord_pairs=1))
                   for j in g.neighbors(0)]}
        exchange_round(g, out, led)
    assert led.rate_per_second(0, 10.0) == 48.0

    led = TrafficLedger()
    for step in range(10):
        led.set_step(step)
        size = payload_bytes(coord_pairs=1, target_records=10)
        out = {0: [Message(0, j, "ccvd", None, size) for j in g.neighbors(0)]}
        exchange_round(g, out, led)
    assert led.rate_per_second(0, 10.0) == 768.0
