#!/usr/bin/env python3
"""
Tests for the end-to-end inference pipeline
"""

import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from cluster import CONSERVATIVE, GREEDY
from errors import InvalidArgumentError, ModelMismatchError
from factors import room_center
from neural import EdgeClassifierModel
from proxgraph import build_graph
from scene_pipeline import ScenePipeline
from synthgen import SAME_ROOM, SAME_WALL, GenConfig, generate_layout


def constant_model(relation, logit):
    """Model whose every edge logit equals `logit`"""
    model = EdgeClassifierModel(relation, hidden_dim=4)
    state = {name: np.zeros_like(v) for name, v in model.state_dict().items()}
    state["dec2.b"] = np.array([logit])
    model.load_state_dict(state)
    return model


def test_models_must_match_their_slot():
    room = EdgeClassifierModel(SAME_ROOM, hidden_dim=4)
    wall = EdgeClassifierModel(SAME_WALL, hidden_dim=4)
    with pytest.raises(ModelMismatchError):
        ScenePipeline(room_model=wall)
    with pytest.raises(ModelMismatchError):
        ScenePipeline.from_models([room, room.copy()])
    pipeline = ScenePipeline.from_models([wall, room])
    assert pipeline.room_model is room
    assert pipeline.wall_model is wall


def test_fewer_than_two_planes_gives_empty_prediction():
    layout = generate_layout(GenConfig(seed=0))
    pipeline = ScenePipeline(constant_model(SAME_ROOM, 5.0))
    for planes in ([], layout.planes[:1]):
        prediction = pipeline.predict(planes)
        assert prediction.rooms == [] and prediction.walls == [] and prediction.edges == []


def test_unknown_mode_is_rejected():
    with pytest.raises(InvalidArgumentError):
        ScenePipeline().predict([], "optimistic")


def test_even_odds_pass_greedy_but_not_conservative():
    layout = generate_layout(GenConfig(seed=2, n_rooms=(2, 2), corridor_prob=0.0))
    pipeline = ScenePipeline(constant_model(SAME_ROOM, 0.0))
    assert pipeline.predict(layout.planes, CONSERVATIVE).rooms == []
    greedy = pipeline.predict(layout.planes, GREEDY)
    assert greedy.tau_room == 0.5
    assert len(greedy.rooms) == 2
    assert all(len(room.plane_ids) == 4 for room in greedy.rooms)


def test_confident_models_give_disjoint_rooms_and_matched_walls():
    layout = generate_layout(GenConfig(seed=6))
    pipeline = ScenePipeline(constant_model(SAME_ROOM, 4.0), constant_model(SAME_WALL, 4.0))
    prediction = pipeline.predict(layout.planes, CONSERVATIVE)
    graph = build_graph(layout.planes)

    assert len(prediction.room_edges()) == graph.num_edges
    assert len(prediction.wall_edges()) == graph.num_edges
    members = [pid for room in prediction.rooms for pid in room.plane_ids]
    assert len(members) == len(set(members))
    wall_members = [pid for wall in prediction.walls for pid in wall.plane_ids]
    assert len(wall_members) == len(set(wall_members))

    planes = layout.plane_map()
    for k, room in enumerate(prediction.rooms):
        assert room.id == f"room{k:03d}"
        assert room.center == pytest.approx(tuple(room_center(room.plane_ids, planes)))
    for wall in prediction.walls:
        a, b = (planes[pid] for pid in wall.plane_ids)
        assert float(np.dot(a.normal, b.normal)) < -0.9


def test_preprocess_replaces_the_planes():
    layout = generate_layout(GenConfig(seed=3, n_rooms=(1, 1), corridor_prob=0.0))
    pipeline = ScenePipeline(constant_model(SAME_ROOM, 4.0))
    raw = pipeline.predict(layout.planes)
    cleaned = pipeline.predict(layout.planes, preprocess=True)
    assert [p.id for p in raw.planes] == [p.id for p in layout.planes]
    assert len(cleaned.planes) == 4
    assert cleaned.rooms[0].plane_ids == tuple(sorted(p.id for p in cleaned.planes))
