"""
Directed proximity graph over plane features.

Node features are [n_x, n_y, w]; edge (i, j) carries [c_j - c_i, cd_ij] where
cd_ij is the closest distance between the two segments' extremes.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import EmptyGraphError, InvalidArgumentError
from geometry import PlaneFeature, nearest_neighbors
from synthgen import Layout, SAME_ROOM, SAME_WALL

logger = logging.getLogger(__name__)

DEFAULT_K = 15
STD_FLOOR = 1e-6
RELATIONS = (SAME_ROOM, SAME_WALL)


@dataclass(frozen=True, eq=False)
class ProximityGraph:
    node_ids: Tuple[str, ...]
    node_feats: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    edge_feats: np.ndarray
    labels: Optional[Dict[str, np.ndarray]] = None

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(self.src, self.dst)]

    def edge_id_pairs(self) -> List[Tuple[str, str]]:
        return [(self.node_ids[i], self.node_ids[j]) for i, j in self.edges]


def _edge_matrix(edge_feats, n_edges: int, default_dim: int = 3) -> np.ndarray:
    feats = np.array(edge_feats, dtype=float)
    if n_edges == 0:
        dim = feats.shape[1] if feats.ndim == 2 else default_dim
        return np.zeros((0, dim))
    return feats.reshape(n_edges, -1)


def make_graph(node_ids, node_feats, edges, edge_feats, labels=None) -> ProximityGraph:
    """Assemble a graph from plain arrays, freezing them"""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    arrays = {
        'node_feats': np.array(node_feats, dtype=float).reshape(len(node_ids), -1),
        'src': edges[:, 0].copy(),
        'dst': edges[:, 1].copy(),
        'edge_feats': _edge_matrix(edge_feats, len(edges)),
    }
    for arr in arrays.values():
        arr.setflags(write=False)
    return ProximityGraph(node_ids=tuple(node_ids), labels=labels, **arrays)


def closest_segment_distance(a: PlaneFeature, b: PlaneFeature) -> float:
    """Minimum distance over the four endpoint pairs of two segments"""
    ea = np.asarray(a.endpoints, dtype=float)
    eb = np.asarray(b.endpoints, dtype=float)
    return float(np.sqrt(((ea[:, None, :] - eb[None, :, :]) ** 2).sum(axis=-1)).min())


def build_graph(planes: Sequence[PlaneFeature], k: int = DEFAULT_K) -> ProximityGraph:
    """k-NN by centroid distance, symmetrized, with initial node and edge embeddings"""
    if len(planes) < 2:
        raise EmptyGraphError(f"proximity graph needs at least 2 planes, got {len(planes)}")
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")

    centroids = np.array([p.centroid for p in planes], dtype=float)
    pairs = set()
    for i, neighbors in enumerate(nearest_neighbors(centroids, k)):
        for j in neighbors:
            pairs.add((i, j))
            pairs.add((j, i))
    edges = sorted(pairs)

    node_feats = np.array([[p.normal[0], p.normal[1], p.width] for p in planes], dtype=float)
    edge_feats = np.array([
        [centroids[j, 0] - centroids[i, 0],
         centroids[j, 1] - centroids[i, 1],
         closest_segment_distance(planes[i], planes[j])]
        for i, j in edges
    ], dtype=float)
    logger.debug("proximity graph: %d nodes, %d edges (k=%d)", len(planes), len(edges), k)
    return make_graph([p.id for p in planes], node_feats, edges, edge_feats)


def edge_labels(graph: ProximityGraph, layout: Layout, relation: str) -> np.ndarray:
    """0/1 label per graph edge from the layout's ground-truth pairs"""
    if relation not in RELATIONS:
        raise InvalidArgumentError(f"unknown relation {relation!r}")
    positives = layout.pairs_with_label(relation)
    return np.array([1.0 if pair in positives else 0.0 for pair in graph.edge_id_pairs()])


def graph_for_layout(layout: Layout, k: int = DEFAULT_K) -> ProximityGraph:
    """Proximity graph of a ground-truth layout, labeled for both relations"""
    graph = build_graph(layout.planes, k)
    labels = {relation: edge_labels(graph, layout, relation) for relation in RELATIONS}
    return replace(graph, labels=labels)


@dataclass(frozen=True, eq=False)
class NormStats:
    node_mean: np.ndarray
    node_std: np.ndarray
    edge_mean: np.ndarray
    edge_std: np.ndarray

    def to_dict(self) -> Dict[str, List[float]]:
        return {name: [float(v) for v in getattr(self, name)]
                for name in ('node_mean', 'node_std', 'edge_mean', 'edge_std')}

    @classmethod
    def from_dict(cls, data: Dict[str, Sequence[float]]) -> "NormStats":
        stats = {name: np.asarray(data[name], dtype=float)
                 for name in ('node_mean', 'node_std', 'edge_mean', 'edge_std')}
        for name in ('node_std', 'edge_std'):
            stats[name] = np.maximum(stats[name], STD_FLOOR)
        return cls(**stats)

    @classmethod
    def identity(cls, node_dim: int = 3, edge_dim: int = 3) -> "NormStats":
        return cls(np.zeros(node_dim), np.ones(node_dim), np.zeros(edge_dim), np.ones(edge_dim))


def fit_normalize(graphs: Sequence[ProximityGraph]) -> NormStats:
    """Per-feature mean and std over all nodes and edges of a training set"""
    if not graphs:
        raise InvalidArgumentError("normalization needs at least one training graph")
    nodes = np.concatenate([g.node_feats for g in graphs], axis=0)
    edges = np.concatenate([g.edge_feats for g in graphs], axis=0)
    return NormStats(
        node_mean=nodes.mean(axis=0),
        node_std=np.maximum(nodes.std(axis=0), STD_FLOOR),
        edge_mean=edges.mean(axis=0),
        edge_std=np.maximum(edges.std(axis=0), STD_FLOOR),
    )


def apply_normalize(graph: ProximityGraph, stats: NormStats) -> ProximityGraph:
    node_feats = (graph.node_feats - stats.node_mean) / stats.node_std
    edge_feats = (graph.edge_feats - stats.edge_mean) / stats.edge_std
    return make_graph(graph.node_ids, node_feats, np.stack([graph.src, graph.dst], axis=1),
                      edge_feats, graph.labels)
