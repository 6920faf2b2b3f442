#!/usr/bin/env python3
"""
Tests for edge thresholding, cycle-based room clustering and wall pairing
"""

import itertools
import math
import os
import random
import sys

import networkx as nx
import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from cluster import (CONSERVATIVE, GREEDY, ClusterConfig, EdgePrediction, RoomCluster, WallPair,
                     classify_edges, cluster_room_oracle, cluster_rooms, find_cycles_of_size,
                     pair_walls, threshold_edges)
from errors import InvalidArgumentError
from geometry import PlaneFeature
from neural import EdgeClassifierModel
from performance_benchmark import random_digraph
from proxgraph import build_graph
from settings import slow_tests_enabled
from synthgen import SAME_ROOM, SAME_WALL


def room_edge(src, dst, p):
    return EdgePrediction(src, dst, p, SAME_ROOM)


def wall_edge(src, dst, p):
    return EdgePrediction(src, dst, p, SAME_WALL)


def both_ways(graph, pairs):
    for a, b in pairs:
        graph.add_edge(a, b)
        graph.add_edge(b, a)
    return graph


def clique(nodes):
    return both_ways(nx.DiGraph(), itertools.combinations(nodes, 2))


def seg(plane_id, normal, p0, p1):
    return PlaneFeature.from_endpoints(plane_id, normal, p0, p1)


def test_threshold_edges_keeps_edges_at_or_above_tau():
    preds = [room_edge("a", "b", 0.9), room_edge("b", "c", 0.6), room_edge("c", "a", 0.4)]
    assert threshold_edges(preds, 0.7).number_of_edges() == 1
    assert threshold_edges(preds, 0.5).number_of_edges() == 2
    assert threshold_edges(preds + [room_edge("a", "c", 1.0)], 1.0).number_of_edges() == 1
    assert threshold_edges([room_edge("a", "a", 0.99)], 0.5).number_of_edges() == 0


def test_greedy_threshold_keeps_a_superset():
    rng = np.random.default_rng(4)
    preds = [room_edge(f"n{i}", f"n{j}", float(rng.random())) for i in range(6) for j in range(6) if i != j]
    config = ClusterConfig()
    conservative = set(threshold_edges(preds, config.room_threshold(CONSERVATIVE)).edges)
    greedy = set(threshold_edges(preds, config.room_threshold(GREEDY)).edges)
    assert conservative <= greedy
    with pytest.raises(InvalidArgumentError):
        config.room_threshold("optimistic")


def test_ring_has_one_four_cycle_and_four_two_cycles():
    ring = both_ways(nx.DiGraph(), [("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")])
    assert find_cycles_of_size(ring, 4) == [("a", "b", "c", "d")]
    assert len(find_cycles_of_size(ring, 2)) == 4


def test_cycles_on_pairs_and_dags():
    pair = both_ways(nx.DiGraph(), [("x", "y")])
    assert find_cycles_of_size(pair, 2) == [("x", "y")]
    dag = nx.DiGraph([("a", "b"), ("b", "c"), ("a", "c"), ("c", "d")])
    assert find_cycles_of_size(dag, 2) == []
    assert find_cycles_of_size(dag, 4) == []
    with pytest.raises(InvalidArgumentError):
        find_cycles_of_size(dag, 1)


def test_one_directional_four_cycle_counts_once():
    cycle = nx.DiGraph([("d", "c"), ("c", "b"), ("b", "a"), ("a", "d")])
    assert find_cycles_of_size(cycle, 4) == [("a", "b", "c", "d")]


def test_clean_clique_becomes_one_room():
    clusters = cluster_rooms(clique("abcd"))
    assert clusters == [RoomCluster(("a", "b", "c", "d"), support=3)]


def test_reciprocal_pair_becomes_corridor():
    assert cluster_rooms(both_ways(nx.DiGraph(), [("p", "q")])) == [RoomCluster(("p", "q"), 1)]


def test_better_supported_room_wins_shared_node():
    graph = clique("abcd")
    both_ways(graph, [("d", "e"), ("e", "f"), ("f", "g"), ("g", "d")])
    clusters = cluster_rooms(graph)
    assert clusters == [RoomCluster(("a", "b", "c", "d"), 3), RoomCluster(("e", "f"), 1)]
    assert clusters == cluster_room_oracle(graph)


def test_clusters_are_disjoint_and_order_independent():
    rng = np.random.default_rng(11)
    preds = [room_edge(f"n{i}", f"n{j}", float(rng.random()))
             for i in range(8) for j in range(8) if i != j]
    expected = cluster_rooms(threshold_edges(preds, 0.5))
    seen = set()
    for cluster in expected:
        assert seen.isdisjoint(cluster.plane_ids)
        assert len(cluster.plane_ids) in (2, 4)
        seen.update(cluster.plane_ids)
    shuffled = list(preds)
    random.Random(2).shuffle(shuffled)
    assert cluster_rooms(threshold_edges(shuffled, 0.5)) == expected


def test_matches_oracle_on_random_graphs():
    rng = np.random.default_rng(0)
    for _ in range(150):
        graph = random_digraph(rng)
        assert cluster_rooms(graph) == cluster_room_oracle(graph)


@pytest.mark.skipif(not slow_tests_enabled(), reason="set SCENEGRAPH_SLOW=1")
def test_matches_oracle_on_many_random_graphs():
    rng = np.random.default_rng(1)
    for density in (0.2, 0.45, 0.7):
        for _ in range(500):
            graph = random_digraph(rng, density=density)
            assert cluster_rooms(graph) == cluster_room_oracle(graph)


@pytest.mark.parametrize("kwargs", [
    {"tau_wall": 0.0},
    {"tau_room_greedy": 1.0},
    {"cycle_sizes": ()},
    {"cycle_sizes": (2, 4)},
    {"cycle_sizes": (4, 4, 2)},
    {"cycle_sizes": (4, 1)},
])
def test_cluster_config_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        ClusterConfig(**kwargs)


@pytest.mark.parametrize("p", [-0.1, 1.5, math.nan])
def test_edge_prediction_rejects_bad_probabilities(p):
    with pytest.raises(InvalidArgumentError):
        EdgePrediction("a", "b", p, SAME_ROOM)


def wall_planes():
    return [
        seg("a", (0.0, 1.0), (0.0, 0.0), (4.0, 0.0)),
        seg("b", (0.0, -1.0), (0.0, 0.2), (4.0, 0.2)),
        seg("c", (0.0, -1.0), (0.0, -0.2), (4.0, -0.2)),
        seg("d", (0.0, 1.0), (0.0, 0.4), (4.0, 0.4)),
    ]


def test_pair_walls_single_pair():
    walls = pair_walls([wall_edge("a", "b", 0.9), wall_edge("b", "a", 0.8)], ClusterConfig(), wall_planes())
    assert walls == [WallPair(("a", "b"), 0.9)]


def test_pair_walls_prefers_the_stronger_partner():
    preds = [wall_edge("a", "b", 0.9), wall_edge("a", "c", 0.7), wall_edge("c", "a", 0.7)]
    walls = pair_walls(preds, ClusterConfig(), {p.id: p for p in wall_planes()})
    assert walls == [WallPair(("a", "b"), 0.9)]


def test_pair_walls_rejects_parallel_pairs_unless_filter_disabled():
    preds = [wall_edge("a", "d", 0.99)]
    assert pair_walls(preds, ClusterConfig(), wall_planes()) == []
    assert pair_walls(preds, ClusterConfig(wall_filter=False), wall_planes()) == [WallPair(("a", "d"), 0.99)]


def test_pair_walls_is_a_matching():
    preds = [wall_edge(s, d, p) for s, d, p in
             [("a", "b", 0.6), ("b", "a", 0.95), ("a", "c", 0.9), ("d", "b", 0.8), ("d", "c", 0.55)]]
    walls = pair_walls(preds, ClusterConfig(), wall_planes())
    members = [pid for wall in walls for pid in wall.plane_ids]
    assert len(members) == len(set(members))
    assert walls == [WallPair(("a", "b"), 0.95), WallPair(("c", "d"), 0.55)]


def test_classify_edges_labels_every_graph_edge():
    planes = wall_planes()
    graph = build_graph(planes)
    model = EdgeClassifierModel(SAME_WALL, hidden_dim=4)
    model.load_state_dict({name: np.zeros_like(v) for name, v in model.state_dict().items()})
    preds = classify_edges(model, graph)
    assert [(p.src_id, p.dst_id) for p in preds] == graph.edge_id_pairs()
    assert {p.probability for p in preds} == {0.5}
    assert {p.relation for p in preds} == {SAME_WALL}
