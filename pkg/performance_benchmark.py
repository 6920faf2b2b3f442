#!/usr/bin/env python3
"""
Benchmark and property checks for the scene-graph pipeline
Measures inference latency, gradient correctness, clustering agreement with
the brute-force oracle, refinement convergence and the precision/recall of
models trained on synthetic layouts
"""

import argparse
import json
import os
import statistics
import sys
import time
from datetime import datetime
from typing import Any, Dict, Optional

import networkx as nx
import numpy as np

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from cluster import CONSERVATIVE, GREEDY, ClusterConfig, cluster_room_oracle, cluster_rooms
from evalkit import aggregate_layouts, merge_reports, score_rooms, score_walls, time_pipeline
from factors import SceneFactorGraph, refine
from neural import EdgeClassifierModel, TrainConfig, grad_check, train
from proxgraph import graph_for_layout, make_graph
from scene_io import load_checkpoint
from scene_pipeline import ScenePipeline
from settings import configure_logging
from synthgen import SAME_ROOM, SAME_WALL, GenConfig, generate_dataset, generate_layout

LATENCY_TARGET_MS = 100.0
GRAD_TOLERANCE = 1e-4
REFINE_TOLERANCE = 1e-8
LEARNING_TARGETS = {'wall_precision': 0.95, 'wall_recall': 0.75, 'room_precision': 0.80, 'room_recall': 0.60}


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def random_digraph(rng: np.random.Generator, max_nodes: int = 8, density: float = 0.45) -> nx.DiGraph:
    """Random directed graph on string nodes n0..n{k-1}, biased toward reciprocal pairs"""
    n = int(rng.integers(2, max_nodes + 1))
    graph = nx.DiGraph()
    graph.add_nodes_from(f"n{i}" for i in range(n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                graph.add_edge(f"n{i}", f"n{j}")
                if rng.random() < 0.8:
                    graph.add_edge(f"n{j}", f"n{i}")
    return graph


def random_small_graph(rng: np.random.Generator, relation: str, nodes: int = 6):
    """Fully connected small graph with random features and labels"""
    edges = [(i, j) for i in range(nodes) for j in range(nodes) if i != j]
    labels = (rng.random(len(edges)) < 0.3).astype(float)
    return make_graph([f"q{i}" for i in range(nodes)], rng.normal(size=(nodes, 3)), edges,
                      rng.normal(size=(len(edges), 3)), {relation: labels})


class PerformanceBenchmark:
    def __init__(self, room_model: Optional[EdgeClassifierModel] = None,
                 wall_model: Optional[EdgeClassifierModel] = None, seed: int = 0):
        self.results = {}
        self.seed = seed
        self.room_model = room_model or EdgeClassifierModel(SAME_ROOM, seed=seed)
        self.wall_model = wall_model or EdgeClassifierModel(SAME_WALL, seed=seed + 1)

    def benchmark_pipeline_latency(self, n_planes: int = 30, runs: int = 5) -> Dict[str, float]:
        """Median latency of graph building, normalization, forward and clustering"""
        print(f"🚀 Benchmarking inference pipeline ({n_planes} planes, median of {runs})")
        layout = generate_layout(GenConfig(seed=self.seed, n_rooms=(8, 8), corridor_prob=0.0))
        planes = layout.planes[:n_planes]
        pipeline = ScenePipeline(self.room_model, self.wall_model)
        median_ms = time_pipeline(planes, pipeline, runs=runs)

        small_ms = time_pipeline(layout.planes[:2], pipeline, runs=runs)
        results = {
            'planes': len(planes),
            'median_ms': round(median_ms, 3),
            'two_plane_median_ms': round(small_ms, 3),
            'target_ms': LATENCY_TARGET_MS,
            'passed': median_ms < LATENCY_TARGET_MS,
        }
        print(f"   Median: {median_ms:.2f}ms (target < {LATENCY_TARGET_MS:.0f}ms)")
        print(f"   Two planes: {small_ms:.2f}ms")
        return results

    def benchmark_gradient_check(self, seeds: int = 20, hidden_dim: int = 8) -> Dict[str, Any]:
        """Reverse-mode vs central differences on random 6-node graphs"""
        print(f"🧮 Checking gradients ({seeds} seeds, hidden={hidden_dim})")
        start = time.perf_counter()
        worst = []
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            relation = SAME_ROOM if seed % 2 == 0 else SAME_WALL
            model = EdgeClassifierModel(relation, hidden_dim=hidden_dim, seed=seed)
            worst.append(grad_check(model, random_small_graph(rng, relation)).max_relative_error)
        elapsed = time.perf_counter() - start
        results = {
            'seeds': seeds,
            'max_relative_error': max(worst),
            'median_relative_error': statistics.median(worst),
            'seconds': round(elapsed, 2),
            'passed': max(worst) < GRAD_TOLERANCE,
        }
        print(f"   Max relative error: {max(worst):.2e} in {elapsed:.1f}s")
        return results

    def benchmark_cluster_oracle(self, graphs: int = 500) -> Dict[str, Any]:
        """cluster_rooms against exhaustive subset packing on random graphs"""
        print(f"🔍 Comparing clustering with the oracle ({graphs} graphs)")
        rng = np.random.default_rng(self.seed)
        config = ClusterConfig()
        start = time.perf_counter()
        mismatches = 0
        for _ in range(graphs):
            graph = random_digraph(rng)
            if cluster_rooms(graph, config) != cluster_room_oracle(graph, config):
                mismatches += 1
        elapsed = time.perf_counter() - start
        print(f"   Mismatches: {mismatches}/{graphs} in {elapsed:.1f}s")
        return {'graphs': graphs, 'mismatches': mismatches, 'seconds': round(elapsed, 2),
                'passed': mismatches == 0}

    def benchmark_refinement(self, trials: int = 20) -> Dict[str, Any]:
        """Recover room centers perturbed by 0.3 m with strongly anchored planes"""
        print(f"📐 Refinement recovery ({trials} layouts)")
        rng = np.random.default_rng(self.seed)
        errors, iterations = [], []
        for trial in range(trials):
            layout = generate_layout(GenConfig(seed=self.seed + trial))
            graph = SceneFactorGraph.from_detections(
                layout.planes, rooms=[(r.id, r.plane_ids) for r in layout.rooms], prior_weight=1e8)
            truth = graph.state()
            x = truth.copy()
            offset = 2 * len(graph.planes)
            for k in range(len(graph.nodes)):
                angle = rng.uniform(0, 2 * np.pi)
                x[offset + 2 * k: offset + 2 * k + 2] += 0.3 * np.array([np.cos(angle), np.sin(angle)])
            result = refine(graph.with_state(x))
            errors.append(float(np.max(np.abs(result.graph.state() - truth))))
            iterations.append(result.iterations)
        results = {
            'trials': trials,
            'max_error': max(errors),
            'max_iterations': max(iterations),
            'passed': max(errors) < REFINE_TOLERANCE and max(iterations) <= 10,
        }
        print(f"   Max error: {max(errors):.2e}, max iterations: {max(iterations)}")
        return results

    def benchmark_learning(self, train_layouts: int = 200, test_layouts: int = 50, epochs: int = 35,
                           hidden_dim: int = 32) -> Dict[str, Any]:
        """Train both models on synthetic layouts and score them on held-out ones"""
        print(f"🎓 Learning quality ({train_layouts} layouts x {epochs} epochs, {test_layouts} held out)")
        start = time.perf_counter()
        layouts = generate_dataset(GenConfig(seed=self.seed), train_layouts + test_layouts)
        train_set, test_set = layouts[:train_layouts], layouts[train_layouts:]
        dataset = [graph_for_layout(layout) for layout in train_set]

        models = {}
        for relation in (SAME_ROOM, SAME_WALL):
            config = TrainConfig.for_relation(relation, epochs=epochs, layouts_per_epoch=train_layouts,
                                              hidden_dim=hidden_dim, seed=self.seed)
            model = EdgeClassifierModel(relation, hidden_dim=hidden_dim, seed=self.seed)
            models[relation] = train(model, dataset, config).model
        pipeline = ScenePipeline(models[SAME_ROOM], models[SAME_WALL])

        walls, rooms = [], {CONSERVATIVE: [], GREEDY: []}
        for i, layout in enumerate(test_set):
            predictions = {mode: pipeline.predict(layout.planes, mode) for mode in (CONSERVATIVE, GREEDY)}
            for mode, prediction in predictions.items():
                rooms[mode].append(score_rooms(prediction.rooms, layout, name=str(i)))
            walls.append(score_walls(predictions[CONSERVATIVE].walls, layout, name=str(i)))
        wall_report = merge_reports(walls)
        room_report = merge_reports(rooms[CONSERVATIVE])
        greedy_report = merge_reports(rooms[GREEDY])
        elapsed = time.perf_counter() - start

        def at_least(value, target):
            return value is not None and value >= target

        results = {
            'train_layouts': train_layouts,
            'test_layouts': test_layouts,
            'epochs': epochs,
            'wall_precision': wall_report.precision,
            'wall_recall': wall_report.recall,
            'room_precision': room_report.precision,
            'room_recall': room_report.recall,
            'greedy_room_recall': greedy_report.recall,
            'wall_spread': aggregate_layouts(wall_report),
            'room_spread': aggregate_layouts(room_report),
            'seconds': round(elapsed, 2),
            'passed': (at_least(wall_report.precision, LEARNING_TARGETS['wall_precision'])
                       and at_least(wall_report.recall, LEARNING_TARGETS['wall_recall'])
                       and at_least(room_report.precision, LEARNING_TARGETS['room_precision'])
                       and at_least(room_report.recall, LEARNING_TARGETS['room_recall'])
                       and at_least(greedy_report.recall, room_report.recall or 0.0)),
        }
        print(f"   Walls: P {_fmt(wall_report.precision)} R {_fmt(wall_report.recall)}")
        print(f"   Rooms: P {_fmt(room_report.precision)} R {_fmt(room_report.recall)} "
              f"(greedy R {_fmt(greedy_report.recall)}) in {elapsed:.1f}s")
        return results

    def run_full_benchmark(self, learning: bool = True) -> Dict[str, Any]:
        """Run complete benchmark suite"""
        print("🏃‍♂️ Starting Full Benchmark Suite")
        print("=" * 70)

        start_time = time.time()
        self.results = {
            "pipeline_latency": self.benchmark_pipeline_latency(),
            "gradient_check": self.benchmark_gradient_check(),
            "cluster_oracle": self.benchmark_cluster_oracle(),
            "refinement": self.benchmark_refinement(),
        }
        if learning:
            self.results["learning"] = self.benchmark_learning()
        total_duration = time.time() - start_time

        passed = {name: result['passed'] for name, result in self.results.items()}
        summary = {
            "checks_passed": sum(passed.values()),
            "checks_total": len(passed),
            "benchmark_duration_seconds": round(total_duration, 2),
            "timestamp": datetime.now().isoformat(),
        }

        print("\n" + "=" * 70)
        print("📊 BENCHMARK SUMMARY")
        print("=" * 70)
        for name, ok in passed.items():
            print(f"  {'✅' if ok else '❌'} {name.replace('_', ' ').title()}")
        print(f"\nBenchmark Duration: {total_duration:.2f} seconds")

        self.summary = {**summary, "detailed_results": self.results}
        return self.summary

    def save_benchmark_report(self, filename: str = "scenegraph_benchmark_report.json"):
        """Save detailed benchmark report"""
        if not self.results:
            print("No benchmark results to save. Run benchmark first.")
            return None
        with open(filename, 'w') as f:
            json.dump(self.summary, f, indent=2)
        print(f"📄 Benchmark report saved to: {filename}")
        return self.summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="scene-graph pipeline benchmark")
    parser.add_argument("--room-model")
    parser.add_argument("--wall-model")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--report", default="scenegraph_benchmark_report.json")
    parser.add_argument("--skip-learning", action="store_true", help="skip the train-and-score check")
    args = parser.parse_args(argv)
    configure_logging()

    benchmark = PerformanceBenchmark(
        load_checkpoint(args.room_model) if args.room_model else None,
        load_checkpoint(args.wall_model) if args.wall_model else None,
        seed=args.seed,
    )
    results = benchmark.run_full_benchmark(learning=not args.skip_learning)
    benchmark.save_benchmark_report(args.report)
    return 0 if results["checks_passed"] == results["checks_total"] else 1


if __name__ == "__main__":
    sys.exit(main())
