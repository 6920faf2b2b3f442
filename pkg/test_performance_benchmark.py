#!/usr/bin/env python3
"""
Tests for the benchmark checks, including the train-and-score learning run
"""

import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from performance_benchmark import LEARNING_TARGETS, PerformanceBenchmark
from settings import slow_tests_enabled


def test_learning_check_reports_both_relations():
    results = PerformanceBenchmark(seed=0).benchmark_learning(train_layouts=3, test_layouts=2, epochs=1,
                                                              hidden_dim=4)
    assert (results['train_layouts'], results['test_layouts'], results['epochs']) == (3, 2, 1)
    for key in ('wall_precision', 'wall_recall', 'room_precision', 'room_recall', 'greedy_room_recall'):
        assert results[key] is None or 0.0 <= results[key] <= 1.0
    assert set(results['room_spread']) == {'precision', 'recall'}
    assert results['room_spread']['recall']['count'] == 2
    assert isinstance(results['passed'], bool)


@pytest.mark.skipif(not slow_tests_enabled(), reason="set SCENEGRAPH_SLOW=1")
def test_trained_models_meet_the_quality_targets():
    results = PerformanceBenchmark(seed=0).benchmark_learning()
    assert results['wall_precision'] >= LEARNING_TARGETS['wall_precision']
    assert results['wall_recall'] >= LEARNING_TARGETS['wall_recall']
    assert results['room_precision'] >= LEARNING_TARGETS['room_precision']
    assert results['room_recall'] >= LEARNING_TARGETS['room_recall']
    assert results['greedy_room_recall'] >= results['room_recall']
    assert results['passed']
