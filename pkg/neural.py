"""
Edge classifier: a two-layer graph attention encoder that updates node and
edge embeddings in an interleaved fashion, followed by a three-layer MLP
decoder that scores every directed edge of a proximity graph.

    v_i' = ReLU(g_v([v_i, max_{j->i} alpha_ji * W_m[v_j, e_ji]]))
    e_ij' = ReLU(g_e([v_i, e_ij, v_j]))
    c_ij = g_d([v_i^L, e_ij^L, v_j^L])

Attention is single-head: s_ji = LeakyReLU(a . [W_m[v_i, 0], W_m[v_j, e_ji]]),
normalized with a softmax over the incoming edges of i.
"""

import copy
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

import autograd as ag
from autograd import Tensor
from errors import EmptyDatasetError, InvalidArgumentError, NumericFailure
from proxgraph import (RELATIONS, NormStats, ProximityGraph, apply_normalize,
                       fit_normalize)
from synthgen import SAME_ROOM, SAME_WALL

logger = logging.getLogger(__name__)

ENCODER_LAYERS = 2
DECODER_LAYERS = 3
LEAKY_SLOPE = 0.2
GRAD_CHECK_FLOOR = 1e-5

DEFAULT_POS_WEIGHT = {SAME_ROOM: 3.0, SAME_WALL: 5.0}


def xavier_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> Tensor:
    """Entries i.i.d. uniform on [-b, b] with b = sqrt(6 / (fan_in + fan_out))"""
    if fan_in < 1 or fan_out < 1:
        raise InvalidArgumentError("fan_in and fan_out must be >= 1")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return ag.parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)))


@dataclass
class GatLayer:
    W_m: Tensor
    b_m: Tensor
    a: Tensor
    W_v: Tensor
    b_v: Tensor
    W_e: Tensor
    b_e: Tensor

    @classmethod
    def init(cls, node_dim: int, edge_dim: int, hidden: int, rng) -> "GatLayer":
        return cls(
            W_m=xavier_uniform(node_dim + edge_dim, hidden, rng),
            b_m=ag.parameter(np.zeros(hidden)),
            a=ag.parameter(xavier_uniform(2 * hidden, 1, rng).data.reshape(-1)),
            W_v=xavier_uniform(node_dim + hidden, hidden, rng),
            b_v=ag.parameter(np.zeros(hidden)),
            W_e=xavier_uniform(2 * node_dim + edge_dim, hidden, rng),
            b_e=ag.parameter(np.zeros(hidden)),
        )


@dataclass
class Decoder:
    weights: List[Tensor]
    biases: List[Tensor]

    @classmethod
    def init(cls, in_dim: int, hidden: int, rng) -> "Decoder":
        dims = [in_dim, hidden, hidden, 1]
        weights = [xavier_uniform(dims[k], dims[k + 1], rng) for k in range(DECODER_LAYERS)]
        biases = [ag.parameter(np.zeros(dims[k + 1])) for k in range(DECODER_LAYERS)]
        return cls(weights, biases)


def encoder_step(layer: GatLayer, v: Tensor, e: Tensor, graph: ProximityGraph) -> Tuple[Tensor, Tensor]:
    """One interleaved node/edge update; both updates read the layer's inputs"""
    n = graph.num_nodes
    src, dst = graph.src, graph.dst

    # W_m applied to [v_i, 0] scores the receiving node itself
    self_proj = ag.linear(ag.concat([v, ag.constant(np.zeros((n, e.shape[1])))]), layer.W_m, layer.b_m)
    nbr_proj = ag.linear(ag.concat([ag.gather(v, src), e]), layer.W_m, layer.b_m)
    scores = ag.leaky_relu(ag.row_dot(ag.concat([ag.gather(self_proj, dst), nbr_proj]), layer.a), LEAKY_SLOPE)
    alpha = ag.segment_softmax(scores, dst, n)
    messages = ag.mul_rows(alpha, nbr_proj)
    aggregated = ag.segment_max(messages, dst, n)

    v_next = ag.relu(ag.linear(ag.concat([v, aggregated]), layer.W_v, layer.b_v))
    e_next = ag.relu(ag.linear(ag.concat([ag.gather(v, src), e, ag.gather(v, dst)]), layer.W_e, layer.b_e))
    return v_next, e_next


def decode(decoder: Decoder, v: Tensor, e: Tensor, graph: ProximityGraph) -> Tensor:
    """One logit per directed edge"""
    h = ag.concat([ag.gather(v, graph.src), e, ag.gather(v, graph.dst)])
    last = len(decoder.weights) - 1
    for k, (w, b) in enumerate(zip(decoder.weights, decoder.biases)):
        h = ag.linear(h, w, b)
        if k < last:
            h = ag.relu(h)
    return ag.column(h)


def loss(logits: Tensor, labels, pos_weight: float = 1.0) -> Tensor:
    """Mean weighted binary cross-entropy with logits"""
    labels = np.asarray(labels, dtype=float)
    if labels.shape != logits.shape:
        raise InvalidArgumentError(f"labels shape {labels.shape} != logits shape {logits.shape}")
    return ag.bce_with_logits(logits, labels, pos_weight)


class EdgeClassifierModel:
    """GAT encoder + MLP decoder for one relation type"""

    def __init__(self, relation_type: str, hidden_dim: int = 32, node_dim: int = 3,
                 edge_dim: int = 3, seed: int = 0):
        if relation_type not in RELATIONS:
            raise InvalidArgumentError(f"unknown relation {relation_type!r}")
        if hidden_dim < 1:
            raise InvalidArgumentError("hidden_dim must be >= 1")
        self.relation_type = relation_type
        self.hidden_dim = hidden_dim
        self.node_dim = node_dim
        self.edge_dim = edge_dim
        self.seed = seed
        self.norm_stats: Optional[NormStats] = None
        self.train_config: Dict = {}

        rng = np.random.default_rng(seed)
        self.gat_layers: List[GatLayer] = []
        dv, de = node_dim, edge_dim
        for _ in range(ENCODER_LAYERS):
            self.gat_layers.append(GatLayer.init(dv, de, hidden_dim, rng))
            dv, de = hidden_dim, hidden_dim
        self.decoder = Decoder.init(2 * dv + de, hidden_dim, rng)

    def parameters(self) -> "OrderedDict[str, Tensor]":
        params: "OrderedDict[str, Tensor]" = OrderedDict()
        for l, layer in enumerate(self.gat_layers):
            for name in ('W_m', 'b_m', 'a', 'W_v', 'b_v', 'W_e', 'b_e'):
                params[f"gat{l}.{name}"] = getattr(layer, name)
        for k, (w, b) in enumerate(zip(self.decoder.weights, self.decoder.biases)):
            params[f"dec{k}.W"] = w
            params[f"dec{k}.b"] = b
        return params

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data.copy()) for name, p in self.parameters().items())

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise InvalidArgumentError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.data.shape:
                raise InvalidArgumentError(f"{name}: shape {value.shape} != {p.data.shape}")
            p.data = value.copy()

    def copy(self) -> "EdgeClassifierModel":
        return copy.deepcopy(self)

    def prepare(self, graph: ProximityGraph) -> ProximityGraph:
        """Apply the training-set normalization, if the model has one"""
        return apply_normalize(graph, self.norm_stats) if self.norm_stats is not None else graph

    def forward(self, graph: ProximityGraph) -> Tensor:
        """Logits for an already-normalized graph"""
        v = ag.constant(graph.node_feats)
        e = ag.constant(graph.edge_feats)
        for layer in self.gat_layers:
            v, e = encoder_step(layer, v, e, graph)
        return decode(self.decoder, v, e, graph)

    def predict_proba(self, graph: ProximityGraph, normalized: bool = False) -> np.ndarray:
        g = graph if normalized else self.prepare(graph)
        if g.num_edges == 0:
            return np.zeros(0)
        return ag.sigmoid(self.forward(g).data)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 35
    layouts_per_epoch: int = 200
    learning_rate: float = 1e-3
    seed: int = 0
    pos_weight: float = 3.0
    hidden_dim: int = 32
    holdout_fraction: float = 0.2
    eval_threshold: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be > 0")
        if self.layouts_per_epoch < 1:
            raise InvalidArgumentError("layouts_per_epoch must be >= 1")
        if not (0.0 <= self.holdout_fraction < 1.0):
            raise InvalidArgumentError("holdout_fraction must be in [0, 1)")

    @classmethod
    def for_relation(cls, relation: str, **overrides) -> "TrainConfig":
        overrides.setdefault('pos_weight', DEFAULT_POS_WEIGHT[relation])
        return cls(**overrides)


class Adam:
    def __init__(self, params: "OrderedDict[str, Tensor]", lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.t = 0

    def step(self, grads: Dict[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


def _labels_for(model: EdgeClassifierModel, graph: ProximityGraph) -> np.ndarray:
    if not graph.labels or model.relation_type not in graph.labels:
        raise InvalidArgumentError(f"graph has no {model.relation_type} labels")
    return graph.labels[model.relation_type]


def backward(model: EdgeClassifierModel, graph: ProximityGraph, pos_weight: float = 1.0,
             loss_scale: float = 1.0) -> Tuple[float, "OrderedDict[str, np.ndarray]"]:
    """Loss value and reverse-mode gradient of every parameter on one normalized graph"""
    model.zero_grad()
    value = loss(model.forward(graph), _labels_for(model, graph), pos_weight)
    if loss_scale != 1.0:
        value = ag.scale(value, loss_scale)
    value.backward()
    grads = OrderedDict()
    for name, p in model.parameters().items():
        grads[name] = p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
    return value.item(), grads


@dataclass(frozen=True)
class GradCheckResult:
    max_relative_error: float
    per_parameter: Dict[str, float]


def grad_check(model: EdgeClassifierModel, graph: ProximityGraph, eps: float = 1e-5,
               pos_weight: float = 1.0, max_entries: Optional[int] = None) -> GradCheckResult:
    """Compare reverse-mode gradients with central finite differences"""
    _, analytic = backward(model, graph, pos_weight)
    labels = _labels_for(model, graph)

    def objective() -> float:
        return float(loss(model.forward(graph), labels, pos_weight).data)

    per_param = {}
    for name, p in model.parameters().items():
        flat = p.data.reshape(-1)
        count = flat.size if max_entries is None else min(flat.size, max_entries)
        worst = 0.0
        for idx in range(count):
            original = flat[idx]
            flat[idx] = original + eps
            f_plus = objective()
            flat[idx] = original - eps
            f_minus = objective()
            flat[idx] = original
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[name].reshape(-1)[idx]
            err = abs(a - numeric) / max(abs(a) + abs(numeric), GRAD_CHECK_FLOOR)
            worst = max(worst, err)
        per_param[name] = worst
    return GradCheckResult(max(per_param.values()) if per_param else 0.0, per_param)


def edge_counts(probabilities: np.ndarray, labels: np.ndarray, threshold: float) -> Tuple[int, int, int]:
    predicted = probabilities >= threshold
    actual = labels > 0.5
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    return tp, fp, fn


def evaluate_edges(model: EdgeClassifierModel, graphs: Sequence[ProximityGraph],
                   threshold: float = 0.5, normalized: bool = True) -> Dict[str, Optional[float]]:
    """Edge-level precision and recall over a set of labeled graphs"""
    tp = fp = fn = 0
    for graph in graphs:
        probs = model.predict_proba(graph, normalized=normalized)
        a, b, c = edge_counts(probs, _labels_for(model, graph), threshold)
        tp, fp, fn = tp + a, fp + b, fn + c
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    return {'tp': tp, 'fp': fp, 'fn': fn, 'precision': precision, 'recall': recall}


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    loss: float
    precision: Optional[float]
    recall: Optional[float]


@dataclass
class TrainResult:
    model: EdgeClassifierModel
    history: List[EpochMetrics] = field(default_factory=list)


def split_holdout(count: int, fraction: float, rng: np.random.Generator) -> Tuple[List[int], List[int]]:
    order = [int(i) for i in rng.permutation(count)]
    n_hold = int(round(count * fraction)) if count > 1 else 0
    n_hold = min(n_hold, count - 1)
    return order[n_hold:], order[:n_hold]


def train(model: EdgeClassifierModel, dataset: Sequence[ProximityGraph], config: TrainConfig,
          on_epoch: Optional[Callable[[EpochMetrics], None]] = None) -> TrainResult:
    """Adam on one graph per step; returns the loss curve and held-out P/R per epoch"""
    if not dataset:
        raise EmptyDatasetError("training dataset is empty")
    for graph in dataset:
        _labels_for(model, graph)

    rng = np.random.default_rng(config.seed)
    train_idx, hold_idx = split_holdout(len(dataset), config.holdout_fraction, rng)
    model.norm_stats = fit_normalize([dataset[i] for i in train_idx])
    model.train_config = asdict(config)
    train_graphs = [model.prepare(dataset[i]) for i in train_idx]
    held_out = [model.prepare(dataset[i]) for i in hold_idx]
    logger.info("training %s model: %d train / %d held-out graphs, %d epochs",
                model.relation_type, len(train_graphs), len(held_out), config.epochs)

    params = model.parameters()
    optimizer = Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    result = TrainResult(model=model)
    per_epoch = min(len(train_graphs), config.layouts_per_epoch)

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_graphs))[:per_epoch]
        losses = []
        for step, gi in enumerate(order):
            graph = train_graphs[int(gi)]
            if graph.num_edges == 0:
                continue
            value, grads = backward(model, graph, config.pos_weight)
            if not np.isfinite(value):
                raise NumericFailure("non-finite training loss",
                                     {'epoch': epoch, 'step': step, 'loss': value})
            for name, g in grads.items():
                if not np.all(np.isfinite(g)):
                    raise NumericFailure("non-finite gradient",
                                         {'epoch': epoch, 'step': step, 'parameter': name,
                                          'max_abs': float(np.nanmax(np.abs(g)))})
            optimizer.step(grads)
            losses.append(value)

        mean_loss = float(np.mean(losses)) if losses else 0.0
        if held_out:
            scores = evaluate_edges(model, held_out, config.eval_threshold)
            precision, recall = scores['precision'], scores['recall']
        else:
            precision = recall = None
        metrics = EpochMetrics(epoch, mean_loss, precision, recall)
        result.history.append(metrics)
        logger.info("epoch %d/%d loss=%.5f P=%s R=%s", epoch, config.epochs, mean_loss,
                    _fmt(precision), _fmt(recall))
        if on_epoch is not None:
            on_epoch(metrics)
    return result


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.3f}"
