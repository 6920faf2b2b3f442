#!/usr/bin/env python3
"""
Test the run ledger on an in-memory database
"""

import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from evalkit import DetectionReport
from run_history import RunHistory


@pytest.fixture
def history():
    ledger = RunHistory(":memory:")
    yield ledger
    ledger.close()


def test_train_run_with_epochs(history):
    run_id = history.start_run("train", {"epochs": 2, "relation": "room"}, "same_room", 0)
    history.add_epoch(run_id, 1, 0.9, None, None)
    history.add_epoch(run_id, 2, 0.5, 0.8, 0.6)
    history.finish_run(run_id, "room.json", {"final_loss": 0.5})

    epochs = history.get_epochs(run_id)
    assert [e["epoch"] for e in epochs] == [1, 2]
    assert epochs[0]["precision"] is None
    assert epochs[1]["loss"] == pytest.approx(0.5)

    run = history.get_runs()[0]
    assert run["command"] == "train"
    assert run["args"] == {"epochs": 2, "relation": "room"}
    assert run["artifact_path"] == "room.json"
    assert run["summary"] == {"final_loss": 0.5}


def test_epoch_rewrite_replaces_the_row(history):
    run_id = history.start_run("train", {})
    history.add_epoch(run_id, 1, 0.9, 0.1, 0.1)
    history.add_epoch(run_id, 1, 0.7, 0.2, 0.2)
    assert len(history.get_epochs(run_id)) == 1
    assert history.get_epochs(run_id)[0]["loss"] == pytest.approx(0.7)


def test_reports_keep_insertion_order(history):
    run_id = history.start_run("eval", {"pred": "p.json"})
    history.add_report(run_id, DetectionReport("room", 7.5, 1.5, 2.0))
    history.add_report(run_id, DetectionReport("wall", 5.0, 0.0, 1.0))
    reports = history.get_reports(run_id)
    assert [r["relation"] for r in reports] == ["room", "wall"]
    assert reports[0]["tp"] == pytest.approx(7.5)
    assert reports[1]["precision"] == pytest.approx(1.0)


def test_runs_newest_first_with_filter_and_limit(history):
    ids = [history.start_run(cmd, {}) for cmd in ("train", "infer", "train", "eval")]
    runs = history.get_runs()
    assert [r["id"] for r in runs] == ids[::-1]
    assert [r["command"] for r in history.get_runs(command="train")] == ["train", "train"]
    assert len(history.get_runs(limit=2)) == 2
    assert history.get_runs()[0]["summary"] is None


def test_stats(history):
    room = history.start_run("train", {}, "same_room")
    wall = history.start_run("train", {}, "same_wall")
    history.start_run("infer", {})
    history.add_epoch(room, 1, 0.5, 0.7, 0.5)
    history.add_epoch(room, 2, 0.4, 0.9, 0.6)
    history.add_epoch(wall, 1, 0.6, None, None)

    stats = history.get_stats()
    assert stats["total_runs"] == 3
    assert stats["runs_per_command"] == {"infer": 1, "train": 2}
    assert stats["total_epochs"] == 3
    assert stats["best_precision"] == {"same_room": pytest.approx(0.9)}
