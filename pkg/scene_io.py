"""
JSON artifacts: layouts, checkpoints and predictions.

All files carry a format_version. Numbers are written with Python's
shortest round-trip repr, keys sorted and indentation fixed, so
parse(serialize(x)) reproduces x exactly and re-serializing gives the same
bytes. Readers ignore unknown keys and report malformed input as a
SchemaError with a JSON pointer to the offending value.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np

from cluster import EdgePrediction
from errors import InvalidArgumentError, SchemaError
from geometry import PlaneFeature
from neural import EdgeClassifierModel
from proxgraph import RELATIONS, NormStats
from scene_pipeline import DetectedEntity, Prediction
from synthgen import LABELS, GtEdge, Layout, Room, Wall

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def dumps(data: Dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, data: Dict):
    path = Path(path)
    try:
        path.write_text(dumps(data), encoding="utf-8")
    except OSError as e:
        raise InvalidArgumentError(f"cannot write {path}: {e.strerror or e}") from e
    logger.debug("wrote %s", path)


def read_json(path) -> Dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InvalidArgumentError(f"cannot read {path}: {e.strerror or e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError("", f"{path.name} is not valid JSON ({e.msg} at line {e.lineno})") from e
    if not isinstance(data, dict):
        raise SchemaError("", "top-level value must be an object")
    return data


# -- schema helpers ---------------------------------------------------------

def _ptr(base: str, key) -> str:
    token = str(key).replace("~", "~0").replace("/", "~1")
    return f"{base}/{token}"


def _get(obj: Dict, key: str, pointer: str):
    if not isinstance(obj, dict):
        raise SchemaError(pointer, "expected an object")
    if key not in obj:
        raise SchemaError(_ptr(pointer, key), "missing required field")
    return obj[key]


def _number(value, pointer: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(pointer, f"expected a number, got {type(value).__name__}")
    if not math.isfinite(value):
        raise SchemaError(pointer, "number must be finite")
    return float(value)


def _integer(value, pointer: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(pointer, f"expected an integer, got {type(value).__name__}")
    return value


def _string(value, pointer: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(pointer, f"expected a string, got {type(value).__name__}")
    return value


def _array(value, pointer: str) -> List:
    if not isinstance(value, list):
        raise SchemaError(pointer, f"expected an array, got {type(value).__name__}")
    return value


def _point(value, pointer: str) -> Tuple[float, float]:
    items = _array(value, pointer)
    if len(items) != 2:
        raise SchemaError(pointer, f"expected [x, y], got {len(items)} values")
    return (_number(items[0], _ptr(pointer, 0)), _number(items[1], _ptr(pointer, 1)))


def _strings(value, pointer: str) -> Tuple[str, ...]:
    return tuple(_string(v, _ptr(pointer, i)) for i, v in enumerate(_array(value, pointer)))


def _objects(data: Dict, key: str, parse: Callable, pointer: str = "") -> List:
    base = _ptr(pointer, key)
    return [parse(item, _ptr(base, i)) for i, item in enumerate(_array(_get(data, key, pointer), base))]


def _check_version(data: Dict):
    version = _integer(_get(data, "format_version", ""), "/format_version")
    if version != FORMAT_VERSION:
        raise SchemaError("/format_version", f"unsupported format_version {version}, expected {FORMAT_VERSION}")


def _pair(p) -> List[float]:
    return [float(p[0]), float(p[1])]


# -- layouts ----------------------------------------------------------------

def plane_to_dict(plane: PlaneFeature) -> Dict:
    return {
        "id": plane.id,
        "normal": _pair(plane.normal),
        "d": float(plane.offset),
        "endpoints": [_pair(plane.endpoints[0]), _pair(plane.endpoints[1])],
        "centroid": _pair(plane.centroid),
        "width": float(plane.width),
    }


def plane_from_dict(item: Dict, pointer: str) -> PlaneFeature:
    endpoints = _array(_get(item, "endpoints", pointer), _ptr(pointer, "endpoints"))
    if len(endpoints) != 2:
        raise SchemaError(_ptr(pointer, "endpoints"), "expected two endpoints")
    try:
        plane = PlaneFeature(
            id=_string(_get(item, "id", pointer), _ptr(pointer, "id")),
            normal=_point(_get(item, "normal", pointer), _ptr(pointer, "normal")),
            width=_number(_get(item, "width", pointer), _ptr(pointer, "width")),
            centroid=_point(_get(item, "centroid", pointer), _ptr(pointer, "centroid")),
            endpoints=tuple(_point(e, _ptr(_ptr(pointer, "endpoints"), i)) for i, e in enumerate(endpoints)),
        )
    except InvalidArgumentError as e:
        raise SchemaError(pointer, str(e)) from e
    d = _number(_get(item, "d", pointer), _ptr(pointer, "d"))
    if abs(d - plane.offset) > 1e-6:
        raise SchemaError(_ptr(pointer, "d"), f"offset {d} disagrees with normal and centroid ({plane.offset})")
    return plane


def _entity_to_dict(entity) -> Dict:
    return {"id": entity.id, "center": _pair(entity.center), "plane_ids": list(entity.plane_ids)}


def _entity_fields(item: Dict, pointer: str):
    return (_string(_get(item, "id", pointer), _ptr(pointer, "id")),
            _point(_get(item, "center", pointer), _ptr(pointer, "center")),
            _strings(_get(item, "plane_ids", pointer), _ptr(pointer, "plane_ids")))


def _check_refs(ids: Sequence[str], known: set, pointer: str):
    for i, pid in enumerate(ids):
        if pid not in known:
            raise SchemaError(_ptr(pointer, i), f"unknown plane id {pid!r}")


def layout_to_dict(layout: Layout) -> Dict:
    return {
        "format_version": FORMAT_VERSION,
        "planes": [plane_to_dict(p) for p in layout.planes],
        "rooms": [_entity_to_dict(r) for r in layout.rooms],
        "walls": [_entity_to_dict(w) for w in layout.walls],
        "gt_edges": [{"src": e.src, "dst": e.dst, "label": e.label} for e in layout.gt_edges],
    }


def layout_from_dict(data: Dict) -> Layout:
    _check_version(data)
    planes = _objects(data, "planes", plane_from_dict)
    known = {p.id for p in planes}
    if len(known) != len(planes):
        raise SchemaError("/planes", "plane ids must be unique")

    def room(item, pointer):
        node_id, center, ids = _entity_fields(item, pointer)
        _check_refs(ids, known, _ptr(pointer, "plane_ids"))
        return Room(node_id, center, ids)

    def wall(item, pointer):
        node_id, center, ids = _entity_fields(item, pointer)
        if len(ids) != 2:
            raise SchemaError(_ptr(pointer, "plane_ids"), "a wall has exactly two planes")
        _check_refs(ids, known, _ptr(pointer, "plane_ids"))
        return Wall(node_id, center, ids)

    def edge(item, pointer):
        src = _string(_get(item, "src", pointer), _ptr(pointer, "src"))
        dst = _string(_get(item, "dst", pointer), _ptr(pointer, "dst"))
        label = _string(_get(item, "label", pointer), _ptr(pointer, "label"))
        if label not in LABELS:
            raise SchemaError(_ptr(pointer, "label"), f"unknown label {label!r}")
        _check_refs((src, dst), known, pointer)
        return GtEdge(src, dst, label)

    return Layout(
        planes=tuple(planes),
        rooms=tuple(_objects(data, "rooms", room)),
        walls=tuple(_objects(data, "walls", wall)),
        gt_edges=tuple(_objects(data, "gt_edges", edge)),
    )


def save_layout(path, layout: Layout):
    write_json(path, layout_to_dict(layout))


def load_layout(path) -> Layout:
    return layout_from_dict(read_json(path))


# -- checkpoints ------------------------------------------------------------

def checkpoint_to_dict(model: EdgeClassifierModel) -> Dict:
    params = {}
    for name, value in model.state_dict().items():
        params[name] = {"shape": list(value.shape), "data": [float(v) for v in value.reshape(-1)]}
    stats = model.norm_stats if model.norm_stats is not None else NormStats.identity(model.node_dim, model.edge_dim)
    return {
        "format_version": FORMAT_VERSION,
        "relation_type": model.relation_type,
        "hidden_dim": model.hidden_dim,
        "node_dim": model.node_dim,
        "edge_dim": model.edge_dim,
        "rng_seed": model.seed,
        "norm_stats": stats.to_dict(),
        "train_config": dict(model.train_config),
        "parameters": params,
    }


def model_from_dict(data: Dict) -> EdgeClassifierModel:
    _check_version(data)
    relation = _string(_get(data, "relation_type", ""), "/relation_type")
    if relation not in RELATIONS:
        raise SchemaError("/relation_type", f"unknown relation {relation!r}")
    dims = {key: _integer(_get(data, key, ""), f"/{key}") for key in ("hidden_dim", "node_dim", "edge_dim")}
    if min(dims.values()) < 1:
        raise SchemaError("/hidden_dim", "dimensions must be >= 1")
    seed = _integer(_get(data, "rng_seed", ""), "/rng_seed")
    model = EdgeClassifierModel(relation, dims["hidden_dim"], dims["node_dim"], dims["edge_dim"], seed)

    raw_stats = _get(data, "norm_stats", "")
    stats = {}
    for key in ("node_mean", "node_std", "edge_mean", "edge_std"):
        pointer = _ptr("/norm_stats", key)
        stats[key] = [_number(v, _ptr(pointer, i)) for i, v in enumerate(_array(_get(raw_stats, key, "/norm_stats"), pointer))]
    model.norm_stats = NormStats.from_dict(stats)

    train_config = _get(data, "train_config", "")
    if not isinstance(train_config, dict):
        raise SchemaError("/train_config", "expected an object")
    model.train_config = dict(train_config)

    raw_params = _get(data, "parameters", "")
    if not isinstance(raw_params, dict):
        raise SchemaError("/parameters", "expected an object")
    expected = model.parameters()
    state = {}
    for name, tensor in expected.items():
        pointer = _ptr("/parameters", name)
        entry = _get(raw_params, name, "/parameters")
        shape = tuple(_integer(v, _ptr(_ptr(pointer, "shape"), i))
                      for i, v in enumerate(_array(_get(entry, "shape", pointer), _ptr(pointer, "shape"))))
        values = _array(_get(entry, "data", pointer), _ptr(pointer, "data"))
        if len(values) != int(np.prod(shape, dtype=np.int64)):
            raise SchemaError(_ptr(pointer, "data"), f"{len(values)} values do not fill shape {list(shape)}")
        if shape != tensor.shape:
            raise SchemaError(_ptr(pointer, "shape"), f"shape {list(shape)} != expected {list(tensor.shape)}")
        data_ptr = _ptr(pointer, "data")
        state[name] = np.array([_number(v, _ptr(data_ptr, i)) for i, v in enumerate(values)]).reshape(shape)
    for name in raw_params:
        if name not in expected:
            raise SchemaError(_ptr("/parameters", name), "unexpected parameter")
    model.load_state_dict(state)
    return model


def save_checkpoint(path, model: EdgeClassifierModel):
    write_json(path, checkpoint_to_dict(model))


def load_checkpoint(path) -> EdgeClassifierModel:
    return model_from_dict(read_json(path))


# -- predictions ------------------------------------------------------------

def prediction_to_dict(prediction: Prediction, include_planes: bool = False) -> Dict:
    data: Dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "mode": prediction.mode,
        "tau_room": float(prediction.tau_room),
        "tau_wall": float(prediction.tau_wall),
        "rooms": [_entity_to_dict(r) for r in prediction.rooms],
        "walls": [_entity_to_dict(w) for w in prediction.walls],
        "edges": [{"src": e.src_id, "dst": e.dst_id, "relation": e.relation, "probability": float(e.probability)}
                  for e in prediction.edges],
    }
    if include_planes:
        data["planes"] = [plane_to_dict(p) for p in prediction.planes]
    return data


def prediction_from_dict(data: Dict) -> Prediction:
    _check_version(data)

    def entity(item, pointer):
        node_id, center, ids = _entity_fields(item, pointer)
        return DetectedEntity(node_id, ids, center)

    def wall(item, pointer):
        detected = entity(item, pointer)
        if len(detected.plane_ids) != 2:
            raise SchemaError(_ptr(pointer, "plane_ids"), "a wall has exactly two planes")
        return detected

    def edge(item, pointer):
        try:
            return EdgePrediction(
                _string(_get(item, "src", pointer), _ptr(pointer, "src")),
                _string(_get(item, "dst", pointer), _ptr(pointer, "dst")),
                _number(_get(item, "probability", pointer), _ptr(pointer, "probability")),
                _string(_get(item, "relation", pointer), _ptr(pointer, "relation")),
            )
        except InvalidArgumentError as e:
            raise SchemaError(pointer, str(e)) from e

    return Prediction(
        mode=_string(_get(data, "mode", ""), "/mode"),
        tau_room=_number(_get(data, "tau_room", ""), "/tau_room"),
        tau_wall=_number(_get(data, "tau_wall", ""), "/tau_wall"),
        rooms=_objects(data, "rooms", entity),
        walls=_objects(data, "walls", wall),
        edges=_objects(data, "edges", edge),
        planes=_objects(data, "planes", plane_from_dict) if "planes" in data else [],
    )


def save_prediction(path, prediction: Prediction, include_planes: bool = False):
    write_json(path, prediction_to_dict(prediction, include_planes))


def load_prediction(path) -> Prediction:
    return prediction_from_dict(read_json(path))


def check_prediction_refs(prediction: Prediction, planes: Sequence[PlaneFeature]):
    """Every detected room/wall must name planes of `planes`"""
    known = {p.id for p in planes}
    for key, entities in (("rooms", prediction.rooms), ("walls", prediction.walls)):
        for i, detected in enumerate(entities):
            _check_refs(detected.plane_ids, known, _ptr(_ptr(_ptr("", key), i), "plane_ids"))
