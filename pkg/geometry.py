"""
Plane representations for the scene-graph pipeline.

Wall surfaces arrive either in closest-point form (normal n, offset d with
n·x + d = 0) plus their observed 3D points, or already flattened to 2D line
segments. Everything downstream works on PlaneFeature: a unit normal, a
segment with two endpoints, its width and centroid.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from errors import DegenerateSegmentError, InvalidArgumentError

logger = logging.getLogger(__name__)

Point2 = Tuple[float, float]

UNIT_TOL = 1e-9
FEATURE_TOL = 1e-6
DEGENERATE_WIDTH = 1e-9


def _as_unit(normal, what: str = "normal") -> np.ndarray:
    n = np.asarray(normal, dtype=float).reshape(-1)
    if n.shape != (2,) or not np.all(np.isfinite(n)):
        raise InvalidArgumentError(f"{what} must be a finite 2-vector, got {normal!r}")
    norm = math.hypot(n[0], n[1])
    if abs(norm - 1.0) > UNIT_TOL:
        raise InvalidArgumentError(f"{what} must be unit length (|n|={norm:.12f})")
    return n


def line_direction(normal) -> np.ndarray:
    """Unit direction along the line, (n_y, -n_x)"""
    return np.array([normal[1], -normal[0]], dtype=float)


def _pt(v) -> Point2:
    return (float(v[0]), float(v[1]))


@dataclass(frozen=True)
class PlaneObservation:
    """A mapped wall surface in closest-point form with its observed points"""
    id: str
    points: Tuple[Tuple[float, float, float], ...]
    normal: Optional[Point2] = None
    offset_d: Optional[float] = None


@dataclass(frozen=True)
class PlaneFeature:
    """A wall surface flattened to a 2D segment"""
    id: str
    normal: Point2
    width: float
    centroid: Point2
    endpoints: Tuple[Point2, Point2]

    def __post_init__(self):
        n = _as_unit(self.normal, f"plane {self.id} normal")
        p0 = np.asarray(self.endpoints[0], dtype=float)
        p1 = np.asarray(self.endpoints[1], dtype=float)
        span = p1 - p0
        length = float(np.linalg.norm(span))
        if not self.width > 0:
            raise InvalidArgumentError(f"plane {self.id} width must be > 0")
        if abs(length - self.width) > FEATURE_TOL:
            raise InvalidArgumentError(f"plane {self.id} width {self.width} != endpoint distance {length}")
        if np.linalg.norm((p0 + p1) / 2.0 - np.asarray(self.centroid, dtype=float)) > FEATURE_TOL:
            raise InvalidArgumentError(f"plane {self.id} centroid is not the endpoint midpoint")
        if abs(float(n @ span)) / length > FEATURE_TOL:
            raise InvalidArgumentError(f"plane {self.id} normal is not perpendicular to its segment")

    @classmethod
    def from_endpoints(cls, plane_id: str, normal, p0, p1) -> "PlaneFeature":
        """Build a feature from a normal and two points, snapping them onto one line"""
        n = _as_unit(normal, f"plane {plane_id} normal")
        a = np.asarray(p0, dtype=float)[:2]
        b = np.asarray(p1, dtype=float)[:2]
        mid = (a + b) / 2.0
        direction = line_direction(n)
        ta, tb = float(direction @ (a - mid)), float(direction @ (b - mid))
        lo, hi = min(ta, tb), max(ta, tb)
        if hi - lo <= DEGENERATE_WIDTH:
            raise DegenerateSegmentError(f"plane {plane_id} collapses to a point")
        return cls._from_line(plane_id, n, mid, direction, lo, hi)

    @classmethod
    def _from_line(cls, plane_id, n, base, direction, lo, hi) -> "PlaneFeature":
        e0 = base + lo * direction
        e1 = base + hi * direction
        return cls(
            id=plane_id,
            normal=_pt(n),
            width=float(np.linalg.norm(e1 - e0)),
            centroid=_pt((e0 + e1) / 2.0),
            endpoints=(_pt(e0), _pt(e1)),
        )

    @property
    def offset(self) -> float:
        """Closest-point offset d, with n·x + d = 0 on the line"""
        return -(self.normal[0] * self.centroid[0] + self.normal[1] * self.centroid[1])

    @property
    def direction(self) -> np.ndarray:
        return line_direction(self.normal)

    def extent(self) -> Tuple[float, float]:
        """Interval of the segment along its own direction"""
        d = self.direction
        t0 = float(d @ np.asarray(self.endpoints[0]))
        t1 = float(d @ np.asarray(self.endpoints[1]))
        return min(t0, t1), max(t0, t1)


def closest_point(normal, offset_d: float) -> Point2:
    """Point of the plane n·x + d = 0 nearest the origin, i.e. -d·n"""
    n = _as_unit(normal)
    return _pt(-float(offset_d) * n)


def _fit_line_pca(xy: np.ndarray) -> Tuple[np.ndarray, float]:
    mean = xy.mean(axis=0)
    _, _, vt = np.linalg.svd(xy - mean, full_matrices=False)
    n = vt[-1] / np.linalg.norm(vt[-1])
    d = -float(n @ mean)
    if d > 0:
        n, d = -n, -d
    return n, d


def flatten_to_feature(obs: PlaneObservation) -> PlaneFeature:
    """Drop z, project the points onto the plane's line and keep the extremal ones"""
    pts = np.asarray(obs.points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] < 2:
        raise InvalidArgumentError(f"plane {obs.id} needs at least 2 points")
    xy = pts[:, :2]

    if obs.normal is None:
        n, d = _fit_line_pca(xy)
        logger.debug("plane %s: no normal supplied, PCA fit n=%s d=%.4f", obs.id, n, d)
    else:
        n = _as_unit(obs.normal, f"plane {obs.id} normal")
        d = float(obs.offset_d if obs.offset_d is not None else -(n @ xy.mean(axis=0)))

    direction = line_direction(n)
    t = xy @ direction
    lo, hi = float(t.min()), float(t.max())
    if hi - lo <= DEGENERATE_WIDTH:
        raise DegenerateSegmentError(f"plane {obs.id}: all points project to one location")
    base = -d * n
    return PlaneFeature._from_line(obs.id, n, base, direction, lo, hi)


@dataclass(frozen=True)
class DedupConfig:
    angle_tol: float = math.radians(5.0)
    offset_tol: float = 0.10
    gap_tol: float = 0.15

    def __post_init__(self):
        if not (0 < self.angle_tol < math.pi / 2):
            raise InvalidArgumentError("angle_tol must be in (0, pi/2)")
        if self.offset_tol < 0 or self.gap_tol < 0:
            raise InvalidArgumentError("dedup tolerances must be non-negative")


@dataclass(frozen=True)
class SplitConfig:
    max_perp: float = 0.3
    min_width: float = 0.1


def _mergeable(a: PlaneFeature, b: PlaneFeature, config: DedupConfig) -> bool:
    na, nb = np.asarray(a.normal), np.asarray(b.normal)
    if float(na @ nb) <= math.cos(config.angle_tol):
        return False
    ca, cb = np.asarray(a.centroid), np.asarray(b.centroid)
    offset_gap = max(abs(float(na @ cb) + a.offset), abs(float(nb @ ca) + b.offset))
    if offset_gap >= config.offset_tol:
        return False
    direction = a.direction
    ta = sorted(float(direction @ np.asarray(p)) for p in a.endpoints)
    tb = sorted(float(direction @ np.asarray(p)) for p in b.endpoints)
    gap = max(tb[0] - ta[1], ta[0] - tb[1], 0.0)
    return gap < config.gap_tol


def _merge_group(group: Sequence[PlaneFeature]) -> PlaneFeature:
    weights = np.array([p.width for p in group])
    normals = np.array([p.normal for p in group])
    centroids = np.array([p.centroid for p in group])
    n = weights @ normals
    n = n / np.linalg.norm(n)
    anchor = (weights @ centroids) / weights.sum()
    direction = line_direction(n)
    ts = [float(direction @ np.asarray(e)) for p in group for e in p.endpoints]
    base = float(n @ anchor) * n
    ancestry = sorted({piece for p in group for piece in p.id.split('+')})
    return PlaneFeature._from_line('+'.join(ancestry), n, base, direction, min(ts), max(ts))


def dedup_planes(planes: Sequence[PlaneFeature], config: DedupConfig = DedupConfig()) -> List[PlaneFeature]:
    """Merge near-duplicate planes until no mergeable pair is left"""
    current = list(planes)
    while True:
        graph = nx.Graph()
        graph.add_nodes_from(range(len(current)))
        graph.add_edges_from((i, j) for i in range(len(current)) for j in range(i + 1, len(current))
                             if _mergeable(current[i], current[j], config))
        if graph.number_of_edges() == 0:
            return current

        groups = sorted(sorted(component) for component in nx.connected_components(graph))
        logger.debug("dedup round: %d planes -> %d", len(current), len(groups))
        current = [current[g[0]] if len(g) == 1 else _merge_group([current[i] for i in g]) for g in groups]


def _cross(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _crossing_parameter(s: PlaneFeature, o: PlaneFeature, eps: float = 1e-9) -> Optional[float]:
    p, q = np.asarray(s.endpoints[0]), np.asarray(o.endpoints[0])
    r = np.asarray(s.endpoints[1]) - p
    u = np.asarray(o.endpoints[1]) - q
    denom = _cross(r, u)
    if abs(denom) < 1e-12:
        return None
    t = _cross(q - p, u) / denom
    w = _cross(q - p, r) / denom
    if eps < t < 1 - eps and eps < w < 1 - eps:
        return float(s.direction @ (p + t * r))
    return None


def split_planes(planes: Sequence[PlaneFeature], config: SplitConfig = SplitConfig()) -> List[PlaneFeature]:
    """Cut segments where a neighbor's endpoint lands on them or where two segments cross"""
    result: List[PlaneFeature] = []
    for s in planes:
        n = np.asarray(s.normal)
        direction = s.direction
        lo, hi = s.extent()
        cuts = []
        for o in planes:
            if o is s:
                continue
            for e in o.endpoints:
                e = np.asarray(e)
                if abs(float(n @ e) + s.offset) <= config.max_perp:
                    t = float(direction @ e)
                    if lo + DEGENERATE_WIDTH < t < hi - DEGENERATE_WIDTH:
                        cuts.append(t)
            t_cross = _crossing_parameter(s, o)
            if t_cross is not None:
                cuts.append(t_cross)

        if not cuts:
            result.append(s)
            continue

        bounds = [lo]
        for t in sorted(cuts):
            if t - bounds[-1] > DEGENERATE_WIDTH:
                bounds.append(t)
        bounds.append(hi)
        base = -s.offset * n
        for k, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
            if b - a > config.min_width:
                result.append(PlaneFeature._from_line(f"{s.id}/{k}", n, base, direction, a, b))
            else:
                logger.debug("split: dropped %.3f m sliver of %s", b - a, s.id)
    return result


def preprocess_planes(planes: Sequence[PlaneFeature],
                      dedup: DedupConfig = DedupConfig(),
                      split: SplitConfig = SplitConfig()) -> List[PlaneFeature]:
    """Deduplicate then split, the order used for mapped (noisy) planes"""
    return split_planes(dedup_planes(planes, dedup), split)


def nearest_neighbors(centroids, k: int) -> List[List[int]]:
    """Indices of the k nearest centroids per row, ties broken by index"""
    pts = np.asarray(centroids, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return []
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    np.fill_diagonal(dist, np.inf)
    result = []
    for i in range(n):
        order = np.lexsort((np.arange(n), dist[i]))
        result.append([int(j) for j in order[:min(k, n - 1)]])
    return result
