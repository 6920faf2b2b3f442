"""
Scoring of detected Rooms and Walls against ground truth, threshold sweeps
and pipeline latency.

Rooms earn fractional credit: a detection matched to a ground-truth room
scores the Jaccard overlap of their plane sets. Walls are exact pairs.
"""

import logging
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from cluster import CONSERVATIVE, ClusterConfig, EdgePrediction, cluster_rooms, threshold_edges
from errors import InvalidArgumentError
from geometry import PlaneFeature
from synthgen import Layout

logger = logging.getLogger(__name__)

ROOM = "room"
WALL = "wall"
TIMING_RUNS = 5


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den > 0 else None


@dataclass(frozen=True)
class DetectionReport:
    relation: str
    true_positives: float
    false_positives: float
    false_negatives: float
    per_layout: Tuple[Dict, ...] = ()

    @property
    def precision(self) -> Optional[float]:
        return _ratio(self.true_positives, self.true_positives + self.false_positives)

    @property
    def recall(self) -> Optional[float]:
        return _ratio(self.true_positives, self.true_positives + self.false_negatives)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['per_layout'] = list(self.per_layout)
        data['precision'] = self.precision
        data['recall'] = self.recall
        return data


def _plane_sets(items: Iterable) -> List[frozenset]:
    return [frozenset(getattr(item, 'plane_ids', item)) for item in items]


def match_rooms(detected: Sequence[frozenset], truth: Sequence[frozenset]) -> List[Tuple[int, int, float]]:
    """Greedy one-to-one matching by descending plane overlap; returns (det, gt, jaccard)"""
    candidates = []
    for i, det in enumerate(detected):
        for j, gt in enumerate(truth):
            overlap = len(det & gt)
            if overlap:
                candidates.append((-overlap, -overlap / len(det | gt), i, j))
    candidates.sort()
    used_det, used_gt, matches = set(), set(), []
    for _, neg_jaccard, i, j in candidates:
        if i in used_det or j in used_gt:
            continue
        used_det.add(i)
        used_gt.add(j)
        matches.append((i, j, -neg_jaccard))
    return matches


def score_rooms(detected: Iterable, gt: Layout, name: str = "") -> DetectionReport:
    """detected: RoomClusters, DetectedEntities or plain plane-id tuples"""
    det = _plane_sets(detected)
    truth = _plane_sets(gt.rooms)
    credit = sum(j for _, _, j in match_rooms(det, truth))
    report = DetectionReport(ROOM, credit, len(det) - credit, len(truth) - credit)
    return _with_breakdown(report, name)


def score_walls(detected: Iterable, gt: Layout, name: str = "") -> DetectionReport:
    det = set(_plane_sets(detected))
    truth = set(_plane_sets(gt.walls))
    tp = len(det & truth)
    report = DetectionReport(WALL, float(tp), float(len(det) - tp), float(len(truth) - tp))
    return _with_breakdown(report, name)


def _with_breakdown(report: DetectionReport, name: str) -> DetectionReport:
    row = {'layout': name, 'tp': report.true_positives, 'fp': report.false_positives,
           'fn': report.false_negatives}
    return DetectionReport(report.relation, report.true_positives, report.false_positives,
                           report.false_negatives, (row,))


def merge_reports(reports: Sequence[DetectionReport]) -> DetectionReport:
    """Sum counts over layouts, in the given order"""
    if not reports:
        raise InvalidArgumentError("no reports to merge")
    relations = {r.relation for r in reports}
    if len(relations) != 1:
        raise InvalidArgumentError(f"cannot merge reports of different relations {sorted(relations)}")
    rows = tuple(row for r in reports for row in r.per_layout)
    return DetectionReport(
        relations.pop(),
        sum(r.true_positives for r in reports),
        sum(r.false_positives for r in reports),
        sum(r.false_negatives for r in reports),
        rows,
    )


def _spread(values: Sequence[float]) -> Optional[Dict[str, float]]:
    if not values:
        return None
    arr = np.asarray(values, dtype=float)
    return {'mean': float(arr.mean()), 'std': float(arr.std()), 'min': float(arr.min()),
            'max': float(arr.max()), 'count': int(arr.size)}


def aggregate_layouts(report: DetectionReport) -> Dict[str, Optional[Dict[str, float]]]:
    """Mean/std/min/max of per-layout precision and recall

    Layouts where a ratio is undefined (no detections, or no ground truth)
    are left out of that ratio's statistics.
    """
    precisions, recalls = [], []
    for row in report.per_layout:
        p = _ratio(row['tp'], row['tp'] + row['fp'])
        r = _ratio(row['tp'], row['tp'] + row['fn'])
        if p is not None:
            precisions.append(p)
        if r is not None:
            recalls.append(r)
    return {'precision': _spread(precisions), 'recall': _spread(recalls)}


@dataclass(frozen=True)
class SweepPoint:
    tau: float
    report: DetectionReport
    kept_edges: int


def threshold_sweep(room_preds: Sequence[Sequence[EdgePrediction]], layouts: Sequence[Layout],
                    taus: Sequence[float], config: ClusterConfig = ClusterConfig()) -> List[SweepPoint]:
    """Room P/R per threshold, with the same predictions reused for every tau"""
    if len(room_preds) != len(layouts):
        raise InvalidArgumentError("one prediction list per layout is required")
    points = []
    for tau in taus:
        reports = []
        kept = 0
        for i, (preds, layout) in enumerate(zip(room_preds, layouts)):
            graph = threshold_edges(preds, tau)
            kept += graph.number_of_edges()
            reports.append(score_rooms(cluster_rooms(graph, config), layout, name=str(i)))
        points.append(SweepPoint(float(tau), merge_reports(reports), kept))
        logger.debug("sweep tau=%.3f kept=%d", tau, kept)
    return points


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def _count(value: float) -> str:
    return f"{value:g}" if float(value).is_integer() else f"{value:.2f}"


def format_report_table(report: DetectionReport, show_layouts: bool = False) -> str:
    lines = [
        f"{'relation':<10}{'TP':>10}{'FP':>10}{'FN':>10}{'precision':>12}{'recall':>10}",
        f"{report.relation:<10}{_count(report.true_positives):>10}{_count(report.false_positives):>10}"
        f"{_count(report.false_negatives):>10}{_fmt(report.precision):>12}{_fmt(report.recall):>10}",
    ]
    if show_layouts and len(report.per_layout) > 1:
        lines.append("")
        for row in report.per_layout:
            lines.append(f"  {row['layout']:<8}{_count(row['tp']):>10}{_count(row['fp']):>10}{_count(row['fn']):>10}")
    return "\n".join(lines)


def time_pipeline(planes: Sequence[PlaneFeature], pipeline, mode: str = CONSERVATIVE,
                  runs: int = TIMING_RUNS) -> float:
    """Median wall-clock milliseconds of pipeline.predict over `runs` serial runs"""
    timings = []
    for _ in range(runs):
        start = time.perf_counter()
        pipeline.predict(planes, mode)
        timings.append((time.perf_counter() - start) * 1000.0)
    median = statistics.median(timings)
    logger.info("pipeline on %d planes: median %.2f ms over %d runs", len(planes), median, runs)
    return median
