#!/usr/bin/env python3
"""
Tests for room/wall factors, their Jacobians and the Gauss-Newton refinement
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from errors import DegenerateRoomError, InvalidArgumentError, SingularSystemError
from factors import (PlaneParam, RefineConfig, SceneFactorGraph, refine, residual_room2,
                     residual_room4, residual_wall, room_center)
from geometry import PlaneFeature
from settings import slow_tests_enabled
from synthgen import GenConfig, generate_layout


def seg(plane_id, normal, p0, p1):
    return PlaneFeature.from_endpoints(plane_id, normal, p0, p1)


def rectangle(x0=0.0, y0=0.0, x1=1.0, y1=1.0, prefix="s"):
    return [
        seg(f"{prefix}_left", (1.0, 0.0), (x0, y0), (x0, y1)),
        seg(f"{prefix}_bottom", (0.0, 1.0), (x0, y0), (x1, y0)),
        seg(f"{prefix}_right", (-1.0, 0.0), (x1, y0), (x1, y1)),
        seg(f"{prefix}_top", (0.0, -1.0), (x0, y1), (x1, y1)),
    ]


def corridor():
    return (seg("c_bottom", (0.0, 1.0), (0.0, 0.0), (6.0, 0.0)),
            seg("c_top", (0.0, -1.0), (0.0, 2.0), (6.0, 2.0)))


def thin_wall():
    return (seg("w_a", (-1.0, 0.0), (1.0, 0.0), (1.0, 1.0)),
            seg("w_b", (1.0, 0.0), (1.1, 0.0), (1.1, 1.0)))


def numeric_jacobian(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    columns = []
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = eps
        columns.append((fn(x + step) - fn(x - step)) / (2 * eps))
    return np.column_stack(columns)


def test_room_center_is_centroid_mean():
    planes = {p.id: p for p in rectangle()}
    assert room_center(list(planes), planes) == pytest.approx([0.5, 0.5])
    pair = {"a": seg("a", (0.0, 1.0), (-1.0, 0.0), (1.0, 0.0)), "b": seg("b", (0.0, -1.0), (-1.0, 2.0), (1.0, 2.0))}
    assert room_center(["a", "b"], pair) == pytest.approx([0.0, 1.0])
    with pytest.raises(InvalidArgumentError):
        room_center([], planes)


def test_room_center_random_centroids():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-5, 5, size=(4, 2))
    planes = {f"p{i}": seg(f"p{i}", (0.0, 1.0), (x - 0.5, y), (x + 0.5, y)) for i, (x, y) in enumerate(pts)}
    assert np.allclose(room_center(list(planes), planes), pts.mean(axis=0), atol=1e-12)


def test_unit_square_room_residual():
    planes = rectangle()
    assert residual_room4((0.5, 0.5), planes).residual == pytest.approx([0.0, 0.0], abs=1e-12)
    assert residual_room4((0.6, 0.5), planes).residual == pytest.approx([0.1, 0.0], abs=1e-12)


def test_room4_residual_ignores_plane_order():
    planes = rectangle(0.0, 0.0, 4.0, 3.0)
    forward = residual_room4((1.0, 1.0), planes).residual
    shuffled = residual_room4((1.0, 1.0), [planes[2], planes[0], planes[3], planes[1]]).residual
    assert shuffled == pytest.approx(forward, abs=1e-12)


def test_room4_rejects_non_rectangular_sets():
    same_way = [seg(f"p{i}", (0.0, 1.0), (0.0, float(i)), (1.0, float(i))) for i in range(4)]
    with pytest.raises(DegenerateRoomError):
        residual_room4((0.0, 0.0), same_way)
    with pytest.raises(DegenerateRoomError):
        residual_room4((0.0, 0.0), rectangle()[:3])


def test_corridor_projection():
    bottom, top = corridor()
    assert residual_room2((3.0, 1.0), bottom, top, (3.0, 1.0)).residual == pytest.approx([0.0, 0.0])
    ev = residual_room2((3.0, 1.0), bottom, top, (3.0, 0.4))
    assert ev.residual == pytest.approx([0.0, 0.0], abs=1e-12)
    ev = residual_room2((0.0, 0.0), top, bottom, (3.0, 0.4))
    assert ev.residual == pytest.approx([-3.0, -1.0], abs=1e-12)


def test_room2_rejects_same_direction_normals():
    a = seg("a", (0.0, 1.0), (0.0, 0.0), (1.0, 0.0))
    b = seg("b", (0.0, 1.0), (0.0, 2.0), (1.0, 2.0))
    with pytest.raises(DegenerateRoomError):
        residual_room2((0.0, 1.0), a, b, (0.5, 1.0))


def test_wall_residual_at_and_off_midplane():
    a, b = thin_wall()
    assert residual_wall((1.05, 0.5), a, b).residual == pytest.approx([0.0, 0.0], abs=1e-12)
    off = residual_wall((1.1, 0.5), a, b).residual
    assert float(np.linalg.norm(off)) == pytest.approx(0.05)


def random_rectangle(rng):
    x0, y0 = rng.uniform(-5, 5, size=2)
    w, h = rng.uniform(1.0, 6.0, size=2)
    return rectangle(x0, y0, x0 + w, y0 + h, prefix="r")


def check_plane_jacobians(residual_fn, params, jac_planes):
    for k, param in enumerate(params):
        def along(v, k=k):
            moved = list(params)
            moved[k] = PlaneParam(float(v[0]), float(v[1]))
            return residual_fn(moved)
        numeric = numeric_jacobian(along, np.array([param.theta, param.d]))
        assert np.allclose(jac_planes[k], numeric, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("seed", range(10))
def test_room4_jacobians_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    planes = random_rectangle(rng)
    params = [PlaneParam(p.theta + rng.normal(0, 0.05), p.d + rng.normal(0, 0.05))
              for p in map(PlaneParam.from_feature, planes)]
    ids = [p.id for p in planes]
    center = rng.uniform(-5, 5, size=2)
    ev = residual_room4(center, params, ids)
    assert np.allclose(ev.jac_estimate, np.eye(2))
    check_plane_jacobians(lambda ps: residual_room4(center, ps, ids).residual, params, ev.jac_planes)


@pytest.mark.parametrize("seed", range(10))
def test_room2_and_wall_jacobians_match_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    angle = rng.uniform(-math.pi, math.pi)
    a = PlaneParam(angle, rng.uniform(-3, 3))
    b = PlaneParam(angle + math.pi + rng.normal(0, 0.1), rng.uniform(-3, 3))
    anchor = rng.uniform(-3, 3, size=2)
    center = rng.uniform(-3, 3, size=2)
    ev = residual_room2(center, a, b, anchor)
    check_plane_jacobians(lambda ps: residual_room2(center, ps[0], ps[1], anchor).residual, [a, b], ev.jac_planes)

    planes = thin_wall()
    wall = residual_wall(center, *planes)
    params = [PlaneParam.from_feature(p) for p in planes]
    mid = (np.asarray(planes[0].centroid) + np.asarray(planes[1].centroid)) / 2.0
    check_plane_jacobians(lambda ps: residual_room2(center, ps[0], ps[1], mid).residual, params, wall.jac_planes)


def scene_graph(prior_weight=1.0, information=None):
    room = rectangle(0.0, 0.0, 4.0, 3.0, prefix="room")
    bottom, top = corridor()
    shifted = [seg(p.id, p.normal, (p.endpoints[0][0], p.endpoints[0][1] - 5.0),
                   (p.endpoints[1][0], p.endpoints[1][1] - 5.0)) for p in (bottom, top)]
    planes = room + shifted + [seg("w_b", (1.0, 0.0), (4.2, 0.0), (4.2, 3.0))]
    return SceneFactorGraph.from_detections(
        planes,
        rooms=[("room", [p.id for p in room]), ("corr", [p.id for p in shifted])],
        walls=[("wall", ["room_right", "w_b"])],
        prior_weight=prior_weight,
        information=information,
    )


def test_scene_graph_state_layout():
    graph = scene_graph()
    assert len(graph.nodes) == 3
    assert len(graph.priors) == len(graph.planes) == 7
    x = graph.state()
    assert x.shape == (2 * 7 + 2 * 3,)
    assert x[14:16] == pytest.approx([2.0, 1.5])
    assert x[18:20] == pytest.approx([4.1, 1.5])
    r, jac = graph.linearize(x)
    assert r.shape == (2 * 3 + 2 * 7,)
    assert jac.shape == (r.size, x.size)


def test_scene_graph_jacobian_matches_finite_differences():
    graph = scene_graph()
    rng = np.random.default_rng(3)
    x = graph.state() + rng.normal(0, 0.05, size=graph.state().size)
    _, jac = graph.linearize(x)
    numeric = numeric_jacobian(lambda v: graph.linearize(v)[0], x)
    assert np.allclose(jac, numeric, rtol=1e-6, atol=1e-7)


def test_information_weights_the_cost():
    x = scene_graph().state()
    x[14] += 0.2
    plain = scene_graph(prior_weight=0.0)
    weighted = scene_graph(prior_weight=0.0, information=4.0 * np.eye(2))
    assert weighted.cost(x) == pytest.approx(4.0 * plain.cost(x))
    assert plain.cost(x) == pytest.approx(0.04)
    with pytest.raises(InvalidArgumentError):
        scene_graph(information=np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(InvalidArgumentError):
        scene_graph(information=-np.eye(2))


def test_degenerate_detections_are_skipped_unless_strict():
    planes = [seg("a", (0.0, 1.0), (0.0, 0.0), (1.0, 0.0)), seg("b", (0.0, 1.0), (0.0, 2.0), (1.0, 2.0))]
    graph = SceneFactorGraph.from_detections(planes, rooms=[("r", ["a", "b"])], walls=[("w", ["a", "b"])])
    assert graph.nodes == ()
    with pytest.raises(DegenerateRoomError):
        SceneFactorGraph.from_detections(planes, rooms=[("r", ["a", "b"])], strict=True)
    with pytest.raises(DegenerateRoomError):
        SceneFactorGraph.from_detections(planes, rooms=[("r", ["a"])], strict=True)


def test_unknown_plane_ids_are_rejected():
    room = rectangle()
    with pytest.raises(InvalidArgumentError, match="zz1"):
        SceneFactorGraph.from_detections(room, rooms=[("r", ["s_left", "s_bottom", "s_right", "zz1"])])
    with pytest.raises(InvalidArgumentError, match="zz1"):
        SceneFactorGraph.from_detections(room, walls=[("w", ["s_left", "zz1"])])


def test_wall_node_evaluates_the_wall_residual():
    graph = scene_graph()
    node = next(n for n in graph.nodes if n.id == "wall")
    index = graph.plane_index
    params = [graph.plane_params[index[pid]] for pid in node.plane_ids]
    center = node.center + np.array([0.03, -0.2])
    ev = node.evaluate(center, params)
    expected = residual_wall(center, params[0], params[1], node.anchor)
    assert np.allclose(ev.residual, expected.residual)
    for got, want in zip(ev.jac_planes, expected.jac_planes):
        assert np.allclose(got, want)
    with pytest.raises(InvalidArgumentError):
        residual_wall(center, params[0], params[1])


@pytest.mark.parametrize("seed", range(10))
def test_ground_truth_layouts_have_zero_cost(seed):
    layout = generate_layout(GenConfig(seed=seed))
    graph = SceneFactorGraph.from_detections(
        layout.planes,
        rooms=[(r.id, r.plane_ids) for r in layout.rooms],
        walls=[(w.id, w.plane_ids) for w in layout.walls],
        strict=True,
    )
    assert len(graph.nodes) == len(layout.rooms) + len(layout.walls)
    assert graph.cost() < 1e-16
    result = refine(graph)
    assert result.iterations == 0
    assert result.converged
    assert result.final_cost < 1e-16


def perturbed_recovery(seed, rng):
    layout = generate_layout(GenConfig(seed=seed))
    graph = SceneFactorGraph.from_detections(
        layout.planes, rooms=[(r.id, r.plane_ids) for r in layout.rooms], prior_weight=1e8)
    truth = graph.state()
    x = truth.copy()
    offset = 2 * len(graph.planes)
    for k in range(len(graph.nodes)):
        angle = rng.uniform(0, 2 * math.pi)
        x[offset + 2 * k: offset + 2 * k + 2] += 0.3 * np.array([math.cos(angle), math.sin(angle)])
    return truth, refine(graph.with_state(x))


@pytest.mark.parametrize("seed", range(3))
def test_refine_recovers_perturbed_room_centers(seed):
    truth, result = perturbed_recovery(seed, np.random.default_rng(seed))
    assert np.max(np.abs(result.graph.state() - truth)) < 1e-8
    assert result.iterations <= 10
    assert result.converged
    assert result.final_cost < result.initial_cost


@pytest.mark.skipif(not slow_tests_enabled(), reason="set SCENEGRAPH_SLOW=1")
def test_refine_recovers_perturbed_room_centers_many_layouts():
    rng = np.random.default_rng(42)
    for seed in range(50):
        truth, result = perturbed_recovery(seed, rng)
        assert np.max(np.abs(result.graph.state() - truth)) < 1e-8
        assert result.iterations <= 10


def test_refine_cost_never_increases_with_noisy_offsets():
    graph = scene_graph()
    rng = np.random.default_rng(8)
    x = graph.state()
    for i in range(len(graph.planes)):
        x[2 * i + 1] += rng.normal(0, 0.02)
    result = refine(graph.with_state(x))
    assert result.final_cost <= result.initial_cost
    assert all(b <= a for a, b in zip(result.cost_history, result.cost_history[1:]))
    refined = result.graph.refined_planes()
    assert [p.id for p in refined] == [p.id for p in graph.planes]


def test_refine_reports_singular_systems():
    graph = scene_graph()
    x = graph.state()
    x[-1] = np.nan
    with pytest.raises(SingularSystemError) as excinfo:
        refine(graph.with_state(x), RefineConfig(max_damping=1e2))
    assert excinfo.value.exit_code == 3


def test_refine_config_validation():
    with pytest.raises(InvalidArgumentError):
        RefineConfig(max_iters=-1)
    with pytest.raises(InvalidArgumentError):
        RefineConfig(damping=0.0)
    result = refine(scene_graph(), RefineConfig(max_iters=0))
    assert result.iterations == 0
