"""
Inference pipeline: planes -> proximity graph -> edge probabilities ->
Room/Wall entities with generated node centers.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from cluster import (CONSERVATIVE, ClusterConfig, EdgePrediction, classify_edges,
                     cluster_rooms, pair_walls, threshold_edges)
from errors import ModelMismatchError
from factors import room_center
from geometry import PlaneFeature, preprocess_planes
from neural import EdgeClassifierModel
from proxgraph import DEFAULT_K, build_graph
from synthgen import SAME_ROOM, SAME_WALL

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectedEntity:
    """A generated Room or Wall node"""
    id: str
    plane_ids: Tuple[str, ...]
    center: Tuple[float, float]


@dataclass
class Prediction:
    mode: str
    tau_room: float
    tau_wall: float
    rooms: List[DetectedEntity] = field(default_factory=list)
    walls: List[DetectedEntity] = field(default_factory=list)
    edges: List[EdgePrediction] = field(default_factory=list)
    planes: List[PlaneFeature] = field(default_factory=list)

    def room_edges(self) -> List[EdgePrediction]:
        return [e for e in self.edges if e.relation == SAME_ROOM]

    def wall_edges(self) -> List[EdgePrediction]:
        return [e for e in self.edges if e.relation == SAME_WALL]


def _check_model(model: Optional[EdgeClassifierModel], relation: str, flag: str):
    if model is not None and model.relation_type != relation:
        raise ModelMismatchError(f"{flag} model predicts {model.relation_type}, expected {relation}")


class ScenePipeline:
    def __init__(self, room_model: Optional[EdgeClassifierModel] = None,
                 wall_model: Optional[EdgeClassifierModel] = None,
                 config: ClusterConfig = ClusterConfig(), k: int = DEFAULT_K):
        _check_model(room_model, SAME_ROOM, "room")
        _check_model(wall_model, SAME_WALL, "wall")
        self.room_model = room_model
        self.wall_model = wall_model
        self.config = config
        self.k = k

    @classmethod
    def from_models(cls, models: Sequence[EdgeClassifierModel], **kwargs) -> "ScenePipeline":
        """Assign models to their relation by their own relation_type"""
        by_relation = {}
        for model in models:
            if model.relation_type in by_relation:
                raise ModelMismatchError(f"two models given for {model.relation_type}")
            by_relation[model.relation_type] = model
        return cls(by_relation.get(SAME_ROOM), by_relation.get(SAME_WALL), **kwargs)

    def predict(self, planes: Sequence[PlaneFeature], mode: str = CONSERVATIVE,
                preprocess: bool = False) -> Prediction:
        tau_room = self.config.room_threshold(mode)
        prediction = Prediction(mode=mode, tau_room=tau_room, tau_wall=self.config.tau_wall)
        planes = preprocess_planes(planes) if preprocess else list(planes)
        prediction.planes = planes
        if len(planes) < 2:
            logger.info("%d planes: nothing to relate", len(planes))
            return prediction

        graph = build_graph(planes, self.k)
        plane_map = {p.id: p for p in planes}

        if self.room_model is not None:
            room_preds = classify_edges(self.room_model, graph)
            prediction.edges.extend(room_preds)
            clusters = cluster_rooms(threshold_edges(room_preds, tau_room), self.config)
            prediction.rooms = [
                DetectedEntity(f"room{i:03d}", c.plane_ids, _center(c.plane_ids, plane_map))
                for i, c in enumerate(clusters)
            ]

        if self.wall_model is not None:
            wall_preds = classify_edges(self.wall_model, graph)
            prediction.edges.extend(wall_preds)
            pairs = pair_walls(wall_preds, self.config, plane_map)
            prediction.walls = [
                DetectedEntity(f"wall{i:03d}", w.plane_ids, _center(w.plane_ids, plane_map))
                for i, w in enumerate(pairs)
            ]

        logger.info("%s mode: %d rooms, %d walls from %d planes",
                    mode, len(prediction.rooms), len(prediction.walls), len(planes))
        return prediction


def _center(plane_ids, plane_map) -> Tuple[float, float]:
    c = room_center(plane_ids, plane_map)
    return (float(c[0]), float(c[1]))
