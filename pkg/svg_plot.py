"""SVG figures of layouts and predictions, drawn with matplotlib's SVG backend"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from matplotlib.patches import Polygon
from scipy.spatial import ConvexHull, QhullError

from errors import InvalidArgumentError
from geometry import PlaneFeature

logger = logging.getLogger(__name__)

# fixed salt and no date keep the SVG bytes reproducible
SVG_RC = {'svg.hashsalt': 'scenegraph', 'svg.fonttype': 'none'}

PLANE_COLOR = '#333333'
NORMAL_COLOR = '#999999'
ROOM_COLORS = ('#4e79a7', '#f28e2b', '#59a14f', '#e15759', '#76b7b2', '#edc948', '#b07aa1', '#ff9da7')
WALL_COLOR = '#d62728'
NORMAL_TICK = 0.25


@dataclass(frozen=True)
class PlotSummary:
    segments: int
    rooms: int
    walls: int
    centers: int


def _hull(planes: Sequence[PlaneFeature]) -> np.ndarray:
    """Convex hull of the member endpoints, counter-clockwise"""
    points = np.array([pt for p in planes for pt in p.endpoints], dtype=float)
    try:
        return points[ConvexHull(points).vertices]
    except (QhullError, ValueError):
        # collinear or too few points: draw the segment chain as is
        return points


def plot_scene(planes: Sequence[PlaneFeature], out_path, rooms: Sequence = (), walls: Sequence = (),
               title: Optional[str] = None, show_normals: bool = True) -> PlotSummary:
    """Plane segments, room hulls, wall pairs and entity centers

    rooms and walls are anything with plane_ids and center (ground-truth Room/Wall
    or DetectedEntity from a prediction).
    """
    plane_map = {p.id: p for p in planes}
    fig = Figure(figsize=(8, 8))
    ax = fig.add_subplot(1, 1, 1)
    ax.set_aspect('equal')

    for k, room in enumerate(rooms):
        members = [plane_map[pid] for pid in room.plane_ids if pid in plane_map]
        if len(members) != len(room.plane_ids):
            raise InvalidArgumentError(f"room {room.id} references planes missing from the layout")
        color = ROOM_COLORS[k % len(ROOM_COLORS)]
        patch = Polygon(_hull(members), closed=True, facecolor=color, alpha=0.2, edgecolor=color)
        patch.set_gid(f"room-{room.id}")
        ax.add_patch(patch)

    for plane in planes:
        (x0, y0), (x1, y1) = plane.endpoints
        line, = ax.plot([x0, x1], [y0, y1], color=PLANE_COLOR, linewidth=1.5)
        line.set_gid(f"plane-{plane.id}")
        if show_normals:
            cx, cy = plane.centroid
            nx_, ny_ = plane.normal
            ax.plot([cx, cx + NORMAL_TICK * nx_], [cy, cy + NORMAL_TICK * ny_], color=NORMAL_COLOR, linewidth=0.8)

    for wall in walls:
        if len(wall.plane_ids) != 2 or any(pid not in plane_map for pid in wall.plane_ids):
            raise InvalidArgumentError(f"wall {wall.id} references planes missing from the layout")
        a, b = (plane_map[pid] for pid in wall.plane_ids)
        link, = ax.plot([a.centroid[0], b.centroid[0]], [a.centroid[1], b.centroid[1]],
                        color=WALL_COLOR, linewidth=2.0, linestyle='--')
        link.set_gid(f"wall-{wall.id}")

    centers = [entity.center for entity in list(rooms) + list(walls)]
    if centers:
        ax.scatter([c[0] for c in centers], [c[1] for c in centers], s=18, color='black', zorder=3)

    ax.autoscale_view()
    if title:
        ax.set_title(title)

    out_path = Path(out_path)
    with matplotlib.rc_context(SVG_RC):
        try:
            fig.savefig(out_path, format='svg', metadata={'Date': None})
        except OSError as e:
            raise InvalidArgumentError(f"cannot write {out_path}: {e.strerror or e}") from e
    logger.info("plotted %d planes, %d rooms, %d walls to %s", len(planes), len(rooms), len(walls), out_path)
    return PlotSummary(len(planes), len(rooms), len(walls), len(centers))
