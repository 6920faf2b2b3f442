"""
From edge probabilities to Room and Wall entities.

Room clustering follows the cycle argument: the same_room edges of a 4-plane
room form cycles of length four, a corridor's two planes form a reciprocal
pair. Node sets are ranked by size first and by how many distinct cycles
support them second, then packed greedily so that no plane joins two rooms.
"""

import itertools
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from errors import InvalidArgumentError
from geometry import PlaneFeature
from synthgen import SAME_ROOM, SAME_WALL

logger = logging.getLogger(__name__)

CONSERVATIVE = "conservative"
GREEDY = "greedy"
MODES = (CONSERVATIVE, GREEDY)

Cycle = Tuple[str, ...]


@dataclass(frozen=True)
class EdgePrediction:
    src_id: str
    dst_id: str
    probability: float
    relation: str

    def __post_init__(self):
        if not (np.isfinite(self.probability) and 0.0 <= self.probability <= 1.0):
            raise InvalidArgumentError(
                f"edge {self.src_id}->{self.dst_id}: probability {self.probability!r} not in [0, 1]")
        if self.relation not in (SAME_ROOM, SAME_WALL):
            raise InvalidArgumentError(f"unknown relation {self.relation!r}")


@dataclass(frozen=True)
class ClusterConfig:
    tau_room_conservative: float = 0.7
    tau_room_greedy: float = 0.5
    tau_wall: float = 0.5
    cycle_sizes: Tuple[int, ...] = (4, 2)
    wall_antiparallel_min: float = 0.9
    wall_filter: bool = True

    def __post_init__(self):
        for name in ('tau_room_conservative', 'tau_room_greedy', 'tau_wall'):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise InvalidArgumentError(f"{name} must be in (0, 1), got {value}")
        sizes = tuple(self.cycle_sizes)
        if not sizes:
            raise InvalidArgumentError("cycle_sizes must not be empty")
        if any(s < 2 for s in sizes) or list(sizes) != sorted(set(sizes), reverse=True):
            raise InvalidArgumentError(f"cycle_sizes must be distinct, >= 2 and descending, got {sizes}")
        object.__setattr__(self, 'cycle_sizes', sizes)

    def room_threshold(self, mode: str) -> float:
        if mode == CONSERVATIVE:
            return self.tau_room_conservative
        if mode == GREEDY:
            return self.tau_room_greedy
        raise InvalidArgumentError(f"unknown mode {mode!r}, expected one of {MODES}")


@dataclass(frozen=True)
class RoomCluster:
    plane_ids: Tuple[str, ...]
    support: int = 1


@dataclass(frozen=True)
class WallPair:
    plane_ids: Tuple[str, str]
    probability: float


def classify_edges(model, graph) -> List[EdgePrediction]:
    """Score every edge of a proximity graph with one relation model"""
    probs = model.predict_proba(graph)
    return [EdgePrediction(src, dst, float(p), model.relation_type)
            for (src, dst), p in zip(graph.edge_id_pairs(), probs)]


def threshold_edges(preds: Iterable[EdgePrediction], tau: float) -> nx.DiGraph:
    """Directed graph of the edges whose probability reaches tau"""
    graph = nx.DiGraph()
    for pred in preds:
        if pred.probability >= tau and pred.src_id != pred.dst_id:
            graph.add_edge(pred.src_id, pred.dst_id, probability=pred.probability)
    return graph


def canonical_cycle(cycle: Sequence[str]) -> Cycle:
    """Rotate to the smallest node and pick the direction with the smaller successor"""
    k = min(range(len(cycle)), key=lambda i: cycle[i])
    forward = tuple(cycle[k:]) + tuple(cycle[:k])
    backward = (forward[0],) + tuple(reversed(forward[1:]))
    return min(forward, backward)


def find_cycles_of_size(graph: nx.DiGraph, length: int) -> List[Cycle]:
    """Simple directed cycles through exactly `length` nodes, one per reversal class"""
    if length < 2:
        raise InvalidArgumentError("cycle length must be >= 2")
    found = {canonical_cycle(c) for c in nx.simple_cycles(graph, length_bound=length) if len(c) == length}
    return sorted(found)


def _count_set_repetitions(cycles: Sequence[Cycle]) -> Counter:
    return Counter(frozenset(c) for c in cycles)


def _pack_disjoint(candidates: Mapping[FrozenSet[str], int]) -> List[RoomCluster]:
    ordered = sorted(candidates.items(), key=lambda kv: (-kv[1], tuple(sorted(kv[0]))))
    taken = set()
    accepted = []
    for nodes, support in ordered:
        if nodes.isdisjoint(taken):
            taken |= nodes
            accepted.append(RoomCluster(tuple(sorted(nodes)), support))
    return accepted


def cluster_rooms(graph: nx.DiGraph, config: ClusterConfig = ClusterConfig()) -> List[RoomCluster]:
    """Cycle-based same_room clustering; larger cycle sizes are served first"""
    remaining = graph.copy()
    clusters: List[RoomCluster] = []
    for length in config.cycle_sizes:
        cycles = find_cycles_of_size(remaining, length)
        accepted = _pack_disjoint(_count_set_repetitions(cycles))
        logger.debug("cycle size %d: %d cycles, %d clusters accepted", length, len(cycles), len(accepted))
        for cluster in accepted:
            remaining.remove_nodes_from(cluster.plane_ids)
        clusters.extend(accepted)
    return clusters


def _subset_support(graph: nx.DiGraph, nodes: Tuple[str, ...]) -> int:
    """Distinct cycles (up to reversal) visiting exactly these nodes"""
    if len(nodes) == 2:
        a, b = nodes
        return int(graph.has_edge(a, b) and graph.has_edge(b, a))
    first, rest = nodes[0], nodes[1:]
    support = 0
    for perm in itertools.permutations(rest):
        if perm[0] > perm[-1]:
            continue
        order = (first,) + perm
        hops = list(zip(order, order[1:] + order[:1]))
        if all(graph.has_edge(u, v) for u, v in hops) or all(graph.has_edge(v, u) for u, v in hops):
            support += 1
    return support


def cluster_room_oracle(graph: nx.DiGraph, config: ClusterConfig = ClusterConfig()) -> List[RoomCluster]:
    """Brute-force subset packing with the same ranking; exponential, small graphs only"""
    available = set(graph.nodes)
    clusters: List[RoomCluster] = []
    for length in config.cycle_sizes:
        candidates: Dict[FrozenSet[str], int] = {}
        for nodes in itertools.combinations(sorted(available), length):
            support = _subset_support(graph, nodes)
            if support:
                candidates[frozenset(nodes)] = support
        accepted = _pack_disjoint(candidates)
        for cluster in accepted:
            available -= set(cluster.plane_ids)
        clusters.extend(accepted)
    return clusters


def antiparallel(a: PlaneFeature, b: PlaneFeature, min_dot: float) -> bool:
    return float(np.dot(a.normal, b.normal)) < -min_dot


def pair_walls(preds: Iterable[EdgePrediction], config: ClusterConfig,
               planes: Union[Mapping[str, PlaneFeature], Sequence[PlaneFeature]]) -> List[WallPair]:
    """Greedy matching of same_wall edges by descending probability"""
    plane_map = planes if isinstance(planes, Mapping) else {p.id: p for p in planes}
    best: Dict[Tuple[str, str], float] = {}
    for pred in preds:
        if pred.probability < config.tau_wall or pred.src_id == pred.dst_id:
            continue
        key = tuple(sorted((pred.src_id, pred.dst_id)))
        if config.wall_filter and not antiparallel(plane_map[key[0]], plane_map[key[1]],
                                                   config.wall_antiparallel_min):
            continue
        best[key] = max(best.get(key, 0.0), pred.probability)

    matched = set()
    walls = []
    for (a, b), prob in sorted(best.items(), key=lambda kv: (-kv[1], kv[0])):
        if a in matched or b in matched:
            continue
        matched.update((a, b))
        walls.append(WallPair((a, b), prob))
    return walls
