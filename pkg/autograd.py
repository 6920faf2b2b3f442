"""
Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Each op records its parents and a closure that pushes the output gradient back
to them. `Tensor.backward()` walks the tape in reverse topological order.
Only the ops the edge classifier needs are provided.
"""

from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np


class Tensor:
    __slots__ = ('data', 'grad', 'requires_grad', 'name', '_parents', '_backward')

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 parents: Sequence["Tensor"] = (), backward: Optional[Callable] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape})"

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad"""
        order: List[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _result(data, parents: Iterable[Tensor], backward: Callable) -> Tensor:
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, parents=parents if needs else (),
                  backward=backward if needs else None)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data, name: Optional[str] = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for x of shape (n, in), w (in, out), b (out,)"""
    out = x.data @ w.data + b.data

    def backward(g):
        _accumulate(x, g @ w.data.T)
        _accumulate(w, x.data.T @ g)
        _accumulate(b, g.sum(axis=0))
    return _result(out, (x, w, b), backward)


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Column-wise concatenation of 2-D tensors with equal row counts"""
    widths = [t.data.shape[1] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=1)

    def backward(g):
        start = 0
        for t, width in zip(tensors, widths):
            _accumulate(t, g[:, start:start + width])
            start += width
    return _result(out, tensors, backward)


def gather(x: Tensor, index: np.ndarray) -> Tensor:
    """Rows x[index]"""
    index = np.asarray(index, dtype=np.int64)
    out = x.data[index]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        _accumulate(x, gx)
    return _result(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        _accumulate(x, g * mask)
    return _result(x.data * mask, (x,), backward)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope)

    def backward(g):
        _accumulate(x, g * scale)
    return _result(x.data * scale, (x,), backward)


def row_dot(x: Tensor, a: Tensor) -> Tensor:
    """Per-row dot product with a vector: (n, m) x (m,) -> (n,)"""
    out = x.data @ a.data

    def backward(g):
        _accumulate(x, np.outer(g, a.data))
        _accumulate(a, x.data.T @ g)
    return _result(out, (x, a), backward)


def mul_rows(alpha: Tensor, m: Tensor) -> Tensor:
    """Scale row k of m by alpha[k]"""
    out = alpha.data[:, None] * m.data

    def backward(g):
        _accumulate(alpha, (g * m.data).sum(axis=1))
        _accumulate(m, g * alpha.data[:, None])
    return _result(out, (alpha, m), backward)


def segment_softmax(scores: Tensor, segment: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of scores within each group of equal segment id"""
    segment = np.asarray(segment, dtype=np.int64)
    s = scores.data
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, segment, s)
    e = np.exp(s - seg_max[segment]) if len(s) else s.copy()
    denom = np.zeros(num_segments)
    np.add.at(denom, segment, e)
    alpha = e / denom[segment] if len(s) else e

    def backward(g):
        weighted = np.zeros(num_segments)
        np.add.at(weighted, segment, alpha * g)
        _accumulate(scores, alpha * (g - weighted[segment]))
    return _result(alpha, (scores,), backward)


def segment_max(m: Tensor, segment: np.ndarray, num_segments: int) -> Tensor:
    """Elementwise max of the rows in each segment; empty segments give zeros"""
    segment = np.asarray(segment, dtype=np.int64)
    n_rows, width = m.data.shape
    out = np.full((num_segments, width), -np.inf)
    np.maximum.at(out, segment, m.data)
    empty = np.isneginf(out)
    out[empty] = 0.0

    # first row (lowest index) attaining the max owns the gradient
    owner = np.full((num_segments, width), n_rows, dtype=np.int64)
    rows, cols = np.nonzero(m.data == out[segment])
    np.minimum.at(owner, (segment[rows], cols), rows)

    def backward(g):
        gm = np.zeros_like(m.data)
        seg_idx, col_idx = np.nonzero(owner < n_rows)
        gm[owner[seg_idx, col_idx], col_idx] = g[seg_idx, col_idx]
        _accumulate(m, gm)
    return _result(out, (m,), backward)


def column(x: Tensor) -> Tensor:
    """(n, 1) -> (n,)"""
    def backward(g):
        _accumulate(x, g.reshape(x.data.shape))
    return _result(x.data.reshape(-1), (x,), backward)


def scale(x: Tensor, factor: float) -> Tensor:
    def backward(g):
        _accumulate(x, g * factor)
    return _result(x.data * factor, (x,), backward)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def bce_with_logits(logits: Tensor, labels, pos_weight: float = 1.0) -> Tensor:
    """Mean binary cross-entropy; positive terms weighted by pos_weight"""
    y = np.asarray(labels, dtype=np.float64)
    x = logits.data
    n = max(len(x), 1)
    terms = pos_weight * y * np.logaddexp(0.0, -x) + (1.0 - y) * np.logaddexp(0.0, x)
    out = np.array(terms.sum() / n)

    def backward(g):
        dx = pos_weight * y * (-sigmoid(-x)) + (1.0 - y) * sigmoid(x)
        _accumulate(logits, g * dx / n)
    return _result(out, (logits,), backward)
