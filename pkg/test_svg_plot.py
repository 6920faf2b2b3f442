#!/usr/bin/env python3
"""
Tests for the SVG layout plots
"""

import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from errors import InvalidArgumentError
from geometry import PlaneFeature
from svg_plot import _hull, plot_scene
from synthgen import Room, Wall


def seg(plane_id, normal, p0, p1):
    return PlaneFeature.from_endpoints(plane_id, normal, p0, p1)


def l_shaped_room():
    return [
        seg("bottom", (0.0, 1.0), (0.0, 0.0), (2.0, 0.0)),
        seg("right", (-1.0, 0.0), (2.0, 0.0), (2.0, 1.0)),
        seg("step", (0.0, -1.0), (2.0, 1.0), (1.0, 1.0)),
        seg("inner", (-1.0, 0.0), (1.0, 1.0), (1.0, 2.0)),
        seg("top", (0.0, -1.0), (1.0, 2.0), (0.0, 2.0)),
        seg("left", (1.0, 0.0), (0.0, 2.0), (0.0, 0.0)),
    ]


def test_hull_drops_the_reflex_corner():
    hull = _hull(l_shaped_room())
    corners = {tuple(round(float(v), 9) for v in point) for point in hull}
    assert corners == {(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 2.0), (0.0, 2.0)}
    assert len(hull) == 5


def test_hull_is_counter_clockwise():
    hull = _hull(l_shaped_room())
    x, y = hull[:, 0], hull[:, 1]
    signed_area = 0.5 * float(sum(x[i] * y[(i + 1) % len(x)] - x[(i + 1) % len(x)] * y[i] for i in range(len(x))))
    assert signed_area == pytest.approx(3.5)


def test_hull_of_collinear_segments_keeps_the_points():
    planes = [seg("a", (0.0, 1.0), (0.0, 0.0), (1.0, 0.0)), seg("b", (0.0, 1.0), (2.0, 0.0), (3.0, 0.0))]
    assert _hull(planes).shape == (4, 2)


def test_plot_scene_writes_room_and_wall_groups(tmp_path):
    planes = l_shaped_room()
    rooms = [Room("r0", (1.0, 1.0), tuple(p.id for p in planes))]
    walls = [Wall("w0", (1.5, 1.0), ("step", "inner"))]
    out = tmp_path / "scene.svg"
    summary = plot_scene(planes, out, rooms, walls, title="L room")
    assert (summary.segments, summary.rooms, summary.walls, summary.centers) == (6, 1, 1, 2)
    text = out.read_text(encoding="utf-8")
    assert 'id="room-r0"' in text
    assert 'id="wall-w0"' in text
    assert 'id="plane-step"' in text


def test_plot_scene_rejects_entities_with_missing_planes(tmp_path):
    planes = l_shaped_room()
    with pytest.raises(InvalidArgumentError, match="w0"):
        plot_scene(planes, tmp_path / "a.svg", walls=[Wall("w0", (0.0, 0.0), ("step", "zz1"))])
    with pytest.raises(InvalidArgumentError, match="r0"):
        plot_scene(planes, tmp_path / "b.svg", rooms=[Room("r0", (0.0, 0.0), ("bottom", "zz1"))])
    assert not (tmp_path / "a.svg").exists()
