#!/usr/bin/env python3
"""
Tests for room/wall scoring, threshold sweeps and pipeline timing
"""

import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from cluster import GREEDY, EdgePrediction, RoomCluster
from errors import InvalidArgumentError
from evalkit import (ROOM, WALL, DetectionReport, aggregate_layouts, format_report_table, match_rooms,
                     merge_reports, score_rooms, score_walls, threshold_sweep, time_pipeline)
from neural import EdgeClassifierModel
from scene_pipeline import ScenePipeline
from synthgen import SAME_ROOM, SAME_WALL, GenConfig, Layout, Room, Wall, generate_layout


def square_rooms(count):
    rooms = tuple(Room(f"r{k:03d}", (0.0, 0.0), tuple(f"p{4 * k + i:04d}" for i in range(4)))
                  for k in range(count))
    return Layout(planes=(), rooms=rooms)


def paired_walls(count):
    walls = tuple(Wall(f"w{k:03d}", (0.0, 0.0), (f"a{k}", f"b{k}")) for k in range(count))
    return Layout(planes=(), walls=walls)


def test_ground_truth_scores_perfectly():
    layout = generate_layout(GenConfig(seed=4))
    rooms = score_rooms(layout.rooms, layout)
    walls = score_walls(layout.walls, layout)
    assert (rooms.precision, rooms.recall) == (1.0, 1.0)
    if layout.walls:
        assert (walls.precision, walls.recall) == (1.0, 1.0)


def test_ten_of_fourteen_rooms():
    layout = square_rooms(14)
    report = score_rooms([room.plane_ids for room in layout.rooms[:10]], layout)
    assert report.precision == pytest.approx(10 / 10)
    assert report.recall == pytest.approx(10 / 14)
    assert report.false_negatives == pytest.approx(4.0)


def test_partial_room_gets_jaccard_credit():
    layout = square_rooms(1)
    detected = [RoomCluster(("p0000", "p0001", "p0002", "x"))]
    report = score_rooms(detected, layout)
    assert report.true_positives == pytest.approx(0.6)
    assert report.false_positives == pytest.approx(0.4)
    assert report.false_negatives == pytest.approx(0.4)


def test_rooms_are_matched_at_most_once():
    layout = square_rooms(1)
    halves = [("p0000", "p0001"), ("p0002", "p0003")]
    report = score_rooms(halves, layout)
    assert report.true_positives == pytest.approx(0.5)
    assert report.false_positives == pytest.approx(1.5)
    assert match_rooms([frozenset("ab"), frozenset("abc")], [frozenset("abc")]) == [(1, 0, 1.0)]


def test_walls_need_the_exact_pair():
    layout = paired_walls(6)
    detected = [(f"b{k}", f"a{k}") for k in range(5)] + [("a5", "b0")]
    report = score_walls(detected, layout)
    assert report.precision == pytest.approx(5 / 6)
    assert report.recall == pytest.approx(5 / 6)


def test_empty_detection_has_undefined_precision():
    report = score_rooms([], square_rooms(2))
    assert report.precision is None
    assert report.recall == 0.0
    assert report.to_dict()["precision"] is None


def test_merge_reports_sums_counts_and_rows():
    a = score_rooms([("p0000", "p0001", "p0002", "p0003")], square_rooms(2), name="a")
    b = score_rooms([], square_rooms(1), name="b")
    merged = merge_reports([a, b])
    assert merged.true_positives == pytest.approx(1.0)
    assert merged.false_negatives == pytest.approx(2.0)
    assert [row["layout"] for row in merged.per_layout] == ["a", "b"]
    with pytest.raises(InvalidArgumentError):
        merge_reports([])
    with pytest.raises(InvalidArgumentError):
        merge_reports([a, score_walls([], paired_walls(1))])


def gt_predictions(layout, false_p=0.6):
    """Ground-truth room edges at 0.9 plus one cross-room false positive"""
    preds = [EdgePrediction(e.src, e.dst, 0.9, SAME_ROOM) for e in layout.gt_edges if e.label == SAME_ROOM]
    a, b = layout.rooms[0].plane_ids[0], layout.rooms[1].plane_ids[0]
    preds += [EdgePrediction(a, b, false_p, SAME_ROOM), EdgePrediction(b, a, false_p, SAME_ROOM)]
    return preds


def test_threshold_sweep_reuses_predictions():
    layouts = [generate_layout(GenConfig(seed=s, n_rooms=(3, 4))) for s in range(3)]
    preds = [gt_predictions(layout) for layout in layouts]
    points = threshold_sweep(preds, layouts, [0.5, 0.7, 0.95])
    assert [p.tau for p in points] == [0.5, 0.7, 0.95]
    kept = [p.kept_edges for p in points]
    assert kept[0] >= kept[1] >= kept[2] == 0
    assert points[1].report.precision == pytest.approx(1.0)
    assert points[1].report.recall == pytest.approx(1.0)
    assert points[2].report.recall == 0.0
    with pytest.raises(InvalidArgumentError):
        threshold_sweep(preds[:1], layouts, [0.5])


def test_report_table_lists_counts_and_ratios():
    report = DetectionReport(WALL, 5.0, 1.0, 1.0)
    table = format_report_table(report)
    assert table.splitlines()[1].split() == ["wall", "5", "1", "1", "0.833", "0.833"]
    partial = format_report_table(DetectionReport(ROOM, 0.6, 0.4, 0.4))
    assert "0.60" in partial


def test_time_pipeline_on_two_planes():
    layout = generate_layout(GenConfig(seed=0))
    pipeline = ScenePipeline(EdgeClassifierModel(SAME_ROOM, hidden_dim=8),
                             EdgeClassifierModel(SAME_WALL, hidden_dim=8))
    assert time_pipeline(layout.planes[:2], pipeline, GREEDY, runs=3) > 0.0


def test_aggregate_layouts_spreads_per_layout_ratios():
    rows = ({'layout': "a", 'tp': 1.0, 'fp': 1.0, 'fn': 0.0},
            {'layout': "b", 'tp': 2.0, 'fp': 0.0, 'fn': 2.0},
            {'layout': "c", 'tp': 0.0, 'fp': 0.0, 'fn': 0.0})
    stats = aggregate_layouts(DetectionReport(WALL, 3.0, 1.0, 2.0, rows))
    assert stats['precision'] == pytest.approx({'mean': 0.75, 'std': 0.25, 'min': 0.5, 'max': 1.0, 'count': 2})
    assert stats['recall'] == pytest.approx({'mean': 0.75, 'std': 0.25, 'min': 0.5, 'max': 1.0, 'count': 2})
    assert aggregate_layouts(DetectionReport(ROOM, 0.0, 0.0, 0.0)) == {'precision': None, 'recall': None}


def test_aggregate_layouts_over_merged_scores():
    layouts = [generate_layout(GenConfig(seed=s)) for s in range(3)]
    merged = merge_reports([score_rooms(layout.rooms[:1], layout, name=str(i)) for i, layout in enumerate(layouts)])
    stats = aggregate_layouts(merged)
    assert stats['precision']['min'] == stats['precision']['max'] == 1.0
    expected = [1.0 / len(layout.rooms) for layout in layouts]
    assert stats['recall']['mean'] == pytest.approx(sum(expected) / 3)
    assert stats['recall']['count'] == 3
