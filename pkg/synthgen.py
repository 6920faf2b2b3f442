"""
Procedural synthetic floorplans with ground-truth "same Room" / "same Wall" labels.

Rooms sit on a jittered grid. Grid lines are shared, so two neighboring rooms
see the partition between them as a pair of anti-parallel wall surfaces (a
Wall). Optional corridor rows add 2-plane rooms that span the whole grid width.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from errors import GenerationError, InvalidArgumentError
from geometry import PlaneFeature, Point2, nearest_neighbors

logger = logging.getLogger(__name__)

SAME_ROOM = "same_room"
SAME_WALL = "same_wall"
NO_RELATION = "none"
LABELS = (SAME_ROOM, SAME_WALL, NO_RELATION)

MIN_ROOM_SIDE = 1.0
MIN_CORRIDOR_WIDTH = 0.8
WALL_OVERLAP_MIN = 0.9
UINT64 = 2 ** 64


@dataclass(frozen=True)
class Room:
    id: str
    center: Point2
    plane_ids: Tuple[str, ...]


@dataclass(frozen=True)
class Wall:
    id: str
    center: Point2
    plane_ids: Tuple[str, str]


@dataclass(frozen=True)
class GtEdge:
    src: str
    dst: str
    label: str


@dataclass(frozen=True)
class Layout:
    planes: Tuple[PlaneFeature, ...]
    rooms: Tuple[Room, ...] = ()
    walls: Tuple[Wall, ...] = ()
    gt_edges: Tuple[GtEdge, ...] = ()

    def plane_map(self) -> Dict[str, PlaneFeature]:
        return {p.id: p for p in self.planes}

    def pairs_with_label(self, label: str) -> Set[Tuple[str, str]]:
        return {(e.src, e.dst) for e in self.gt_edges if e.label == label}


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_rooms: Tuple[int, int] = (2, 8)
    room_size: Tuple[float, float] = (3.0, 6.0)
    jitter_pos: float = 0.5
    jitter_rot: float = math.radians(10.0)
    jitter_size: float = 0.2
    corridor_prob: float = 0.25
    k_negatives: int = 15
    wall_thickness: Tuple[float, float] = (0.1, 0.3)
    corridor_width: Tuple[float, float] = (1.5, 2.5)
    max_retries: int = 20

    def __post_init__(self):
        if not (0 <= self.seed < UINT64):
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        for name in ('n_rooms', 'room_size', 'wall_thickness', 'corridor_width'):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InvalidArgumentError(f"{name} range is empty: {lo}..{hi}")
        if self.n_rooms[0] < 1:
            raise InvalidArgumentError("n_rooms must allow at least one room")
        if not (0.05 <= self.wall_thickness[0] and self.wall_thickness[1] <= 0.4):
            raise InvalidArgumentError("wall_thickness must stay within 0.05..0.4 m")
        if not (0.0 <= self.corridor_prob <= 1.0):
            raise InvalidArgumentError("corridor_prob must be a probability")
        if self.k_negatives < 1:
            raise InvalidArgumentError("k_negatives must be >= 1")
        if self.jitter_pos < 0 or self.jitter_rot < 0 or not (0 <= self.jitter_size < 1):
            raise InvalidArgumentError("jitter values must be non-negative (jitter_size < 1)")


class _PlaneBuilder:
    """Collects axis-aligned planes before the global rigid jitter is applied"""

    def __init__(self):
        self.raw: List[Tuple[Point2, Point2, Point2]] = []

    def add(self, normal: Point2, p0: Point2, p1: Point2) -> int:
        self.raw.append((normal, p0, p1))
        return len(self.raw) - 1


def _plane_id(index: int) -> str:
    return f"p{index:04d}"


def _grid_lines(rng, sizes: Sequence[float], jitter: float) -> np.ndarray:
    lines = np.concatenate([[0.0], np.cumsum(sizes)])
    if jitter > 0 and len(lines) > 2:
        lines[1:-1] += rng.uniform(-jitter / 2.0, jitter / 2.0, size=len(lines) - 2)
    return lines


def _overlap_ratio(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0:
        return 0.0
    return inter / max(a[1] - a[0], b[1] - b[0])


def _try_generate(config: GenConfig, rng: np.random.Generator) -> Optional[Layout]:
    n_rooms = int(rng.integers(config.n_rooms[0], config.n_rooms[1] + 1))
    cols = int(math.ceil(math.sqrt(n_rooms)))
    room_rows = int(math.ceil(n_rooms / cols))

    # row kinds: room rows, with an optional corridor after each of them
    kinds: List[str] = []
    for r in range(room_rows):
        kinds.append('room')
        if rng.random() < config.corridor_prob:
            kinds.append('corridor')

    def jittered(lo, hi, size=None):
        base = rng.uniform(lo, hi, size=size)
        return base * (1.0 + rng.uniform(-config.jitter_size, config.jitter_size, size=size))

    col_sizes = jittered(*config.room_size, size=cols)
    row_sizes = np.array([
        jittered(*config.room_size) if kind == 'room' else rng.uniform(*config.corridor_width)
        for kind in kinds
    ])
    col_t = rng.uniform(*config.wall_thickness, size=cols + 1)
    row_t = rng.uniform(*config.wall_thickness, size=len(kinds) + 1)
    xs = _grid_lines(rng, col_sizes, config.jitter_pos)
    ys = _grid_lines(rng, row_sizes, config.jitter_pos)

    def span(lines, t, i):
        return lines[i] + t[i] / 2.0, lines[i + 1] - t[i + 1] / 2.0

    for c in range(cols):
        lo, hi = span(xs, col_t, c)
        if hi - lo < MIN_ROOM_SIDE:
            return None
    for r, kind in enumerate(kinds):
        lo, hi = span(ys, row_t, r)
        if hi - lo < (MIN_ROOM_SIDE if kind == 'room' else MIN_CORRIDOR_WIDTH):
            return None

    builder = _PlaneBuilder()
    room_planes: List[Tuple[int, ...]] = []
    # per grid row: column -> (left, right, bottom, top) plane indices
    cells: Dict[Tuple[int, int], Dict[str, int]] = {}
    corridor_sides: Dict[int, Dict[str, int]] = {}

    placed = 0
    for r, kind in enumerate(kinds):
        yb, yt = span(ys, row_t, r)
        if kind == 'corridor':
            xl, _ = span(xs, col_t, 0)
            _, xr = span(xs, col_t, cols - 1)
            bottom = builder.add((0.0, 1.0), (xl, yb), (xr, yb))
            top = builder.add((0.0, -1.0), (xl, yt), (xr, yt))
            corridor_sides[r] = {'bottom': bottom, 'top': top, 'x': (xl, xr)}
            room_planes.append((bottom, top))
            continue
        for c in range(cols):
            if placed >= n_rooms:
                break
            xl, xr = span(xs, col_t, c)
            ids = {
                'left': builder.add((1.0, 0.0), (xl, yb), (xl, yt)),
                'bottom': builder.add((0.0, 1.0), (xl, yb), (xr, yb)),
                'right': builder.add((-1.0, 0.0), (xr, yb), (xr, yt)),
                'top': builder.add((0.0, -1.0), (xl, yt), (xr, yt)),
                'x': (xl, xr),
            }
            cells[(r, c)] = ids
            room_planes.append((ids['left'], ids['bottom'], ids['right'], ids['top']))
            placed += 1

    wall_pairs: List[Tuple[int, int]] = []
    for (r, c), ids in sorted(cells.items()):
        right_neighbor = cells.get((r, c + 1))
        if right_neighbor is not None:
            wall_pairs.append((ids['right'], right_neighbor['left']))
        above = r + 1
        if above < len(kinds):
            if kinds[above] == 'room' and (above, c) in cells:
                wall_pairs.append((ids['top'], cells[(above, c)]['bottom']))
            elif kinds[above] == 'corridor':
                corridor = corridor_sides[above]
                if _overlap_ratio(ids['x'], corridor['x']) >= WALL_OVERLAP_MIN:
                    wall_pairs.append((ids['top'], corridor['bottom']))
    for r, corridor in sorted(corridor_sides.items()):
        above = r + 1
        if above < len(kinds) and kinds[above] == 'room':
            for c in range(cols):
                cell = cells.get((above, c))
                if cell is not None and _overlap_ratio(cell['x'], corridor['x']) >= WALL_OVERLAP_MIN:
                    wall_pairs.append((corridor['top'], cell['bottom']))

    # global rigid jitter: rotation about the origin plus a translation
    theta = rng.uniform(-config.jitter_rot, config.jitter_rot) if config.jitter_rot > 0 else 0.0
    shift = rng.uniform(-config.jitter_pos, config.jitter_pos, size=2) if config.jitter_pos > 0 else np.zeros(2)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])

    planes = []
    for index, (normal, p0, p1) in enumerate(builder.raw):
        n = rot @ np.asarray(normal)
        n = n / np.linalg.norm(n)
        a = rot @ np.asarray(p0) + shift
        b = rot @ np.asarray(p1) + shift
        planes.append(PlaneFeature.from_endpoints(_plane_id(index), n, a, b))

    def mean_center(indices) -> Point2:
        pts = np.array([planes[i].centroid for i in indices])
        center = pts.sum(axis=0) / len(indices)
        return (float(center[0]), float(center[1]))

    rooms = tuple(
        Room(id=f"r{k:03d}", center=mean_center(idx), plane_ids=tuple(_plane_id(i) for i in idx))
        for k, idx in enumerate(room_planes)
    )
    walls = tuple(
        Wall(id=f"w{k:03d}", center=mean_center(pair), plane_ids=(_plane_id(pair[0]), _plane_id(pair[1])))
        for k, pair in enumerate(wall_pairs)
    )
    return Layout(planes=tuple(planes), rooms=rooms, walls=walls)


def generate_layout(config: GenConfig) -> Layout:
    """Deterministic labeled layout for the config's seed"""
    rng = np.random.default_rng(config.seed)
    for attempt in range(config.max_retries):
        layout = _try_generate(config, rng)
        if layout is not None:
            logger.debug("seed %d: %d planes, %d rooms, %d walls (attempt %d)",
                         config.seed, len(layout.planes), len(layout.rooms), len(layout.walls), attempt + 1)
            return label_edges(layout, config.k_negatives)
    raise GenerationError(
        f"could not fit rooms after {config.max_retries} attempts "
        f"(room_size={config.room_size}, jitter_size={config.jitter_size})"
    )


def generate_dataset(config: GenConfig, count: int) -> List[Layout]:
    """`count` layouts with per-layout seeds seed + index"""
    if count < 0:
        raise InvalidArgumentError("count must be >= 0")
    layouts = []
    for index in range(count):
        layouts.append(generate_layout(replace(config, seed=(config.seed + index) % UINT64)))
    logger.info("generated %d layouts from seed %d", count, config.seed)
    return layouts


def label_edges(layout: Layout, k_negatives: int) -> Layout:
    """Attach symmetric positive room/wall edges and k-NN negatives"""
    if k_negatives < 1:
        raise InvalidArgumentError("k_negatives must be >= 1")
    ids = [p.id for p in layout.planes]
    index = {pid: i for i, pid in enumerate(ids)}
    labels: Dict[Tuple[int, int], str] = {}

    for room in layout.rooms:
        for a in room.plane_ids:
            for b in room.plane_ids:
                if a != b:
                    labels[(index[a], index[b])] = SAME_ROOM
    for wall in layout.walls:
        a, b = wall.plane_ids
        labels[(index[a], index[b])] = SAME_WALL
        labels[(index[b], index[a])] = SAME_WALL

    centroids = np.array([p.centroid for p in layout.planes], dtype=float).reshape(-1, 2)
    for i, neighbors in enumerate(nearest_neighbors(centroids, k_negatives)):
        for j in neighbors:
            labels.setdefault((i, j), NO_RELATION)
            labels.setdefault((j, i), NO_RELATION)
    _cap_out_degree(labels, centroids, k_negatives)

    gt_edges = tuple(GtEdge(ids[i], ids[j], label) for (i, j), label in sorted(labels.items()))
    return replace(layout, gt_edges=gt_edges)


def _cap_out_degree(labels: Dict[Tuple[int, int], str], centroids: np.ndarray, budget: int):
    """Drop the farthest negatives (both directions) until each plane has at most
    `budget` outgoing labels; positives are never dropped"""
    out_degree = Counter(i for i, _ in labels)
    negatives: Dict[int, List[int]] = {}
    for (i, j), label in labels.items():
        if label == NO_RELATION:
            negatives.setdefault(i, []).append(j)

    for i in sorted(negatives):
        far_first = sorted(negatives[i], key=lambda j: (-float(np.linalg.norm(centroids[i] - centroids[j])), -j))
        for j in far_first:
            if out_degree[i] <= budget:
                break
            if labels.get((i, j)) != NO_RELATION:
                continue
            del labels[(i, j)]
            del labels[(j, i)]
            out_degree[i] -= 1
            out_degree[j] -= 1
