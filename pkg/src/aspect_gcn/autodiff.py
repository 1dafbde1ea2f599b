"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every tensor operation used by the models lives here. Each op builds a
node in a dynamic graph (rebuilt on every forward pass); ``backward`` on
a scalar walks the reachable nodes in reverse creation order, which is a
valid reverse topological order since inputs are always created before
outputs, and accumulates (never overwrites) gradients.

Broadcasting is deliberately restricted: elementwise ops accept equal
shapes or a trailing-dimension bias vector, and row scaling has its own
dedicated op. This keeps every backward rule short enough to audit.

A graph is single-threaded; tensors may move between threads, and
distinct graphs can run in parallel (one per worker). Nothing here
mutates shared state besides the atomic node-id counter.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

_NODE_COUNTER = itertools.count()


class Tensor:
    """An n-dimensional float64 array recorded in a computation graph.

    ``grad`` is allocated lazily and always matches ``data``'s shape.
    Tensors with ``requires_grad=False`` never receive gradient
    contributions.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents", "_backward_rule")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward_rule: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_NODE_COUNTER)
        self._parents = parents
        self._backward_rule = backward_rule

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, contribution: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += contribution

    def backward(self) -> None:
        """Populate ``grad`` on every requires_grad tensor reachable from here.

        Requires a scalar (single-element) tensor. Repeated calls without
        clearing gradients accumulate.
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        # Collect the reachable differentiable subgraph.
        reachable: dict[int, Tensor] = {}
        stack = [self]
        while stack:
            node = stack.pop()
            if node.node_id in reachable or not node.requires_grad:
                continue
            reachable[node.node_id] = node
            stack.extend(node._parents)
        # Reverse creation order == reverse topological order.
        order = sorted(reachable.values(), key=lambda t: t.node_id, reverse=True)
        upstream: dict[int, np.ndarray] = {self.node_id: np.ones_like(self.data)}
        for node in order:
            grad_out = upstream.get(node.node_id)
            if grad_out is None:
                continue
            node.accumulate_grad(grad_out)
            if node._backward_rule is None:
                continue
            for parent, contribution in zip(node._parents, node._backward_rule(grad_out)):
                if contribution is None or not parent.requires_grad:
                    continue
                if parent.node_id in upstream:
                    upstream[parent.node_id] = upstream[parent.node_id] + contribution
                else:
                    upstream[parent.node_id] = contribution

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the module-level functions carry the real rules.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _op(data: np.ndarray, parents: tuple[Tensor, ...], rule) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires, parents=parents, backward_rule=rule if requires else None)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, 2-D x 2-D. dA = dOut @ B^T, dB = A^T @ dOut."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")

    def rule(g):
        return g @ b.data.T, a.data.T @ g

    return _op(a.data @ b.data, (a, b), rule)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over leading axis: [B,n,k] x [B,k,m] -> [B,n,m]."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ValueError(f"bmm dimension mismatch: {a.shape} x {b.shape}")

    def rule(g):
        return g @ np.swapaxes(b.data, 1, 2), np.swapaxes(a.data, 1, 2) @ g

    return _op(a.data @ b.data, (a, b), rule)


# ---------------------------------------------------------------------------
# elementwise


def _check_elementwise(a: Tensor, b: Tensor) -> bool:
    """True when b is a trailing-dimension vector being broadcast over a."""
    if a.shape == b.shape:
        return False
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return True
    raise ValueError(f"elementwise shapes incompatible: {a.shape} vs {b.shape}")


def _sum_to_vector(g: np.ndarray) -> np.ndarray:
    # Collapse all leading axes, leaving the trailing vector.
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    broadcast = _check_elementwise(a, b)

    def rule(g):
        return g, _sum_to_vector(g) if broadcast else g

    return _op(a.data + b.data, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    broadcast = _check_elementwise(a, b)

    def rule(g):
        return g, -(_sum_to_vector(g) if broadcast else g)

    return _op(a.data - b.data, (a, b), rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    broadcast = _check_elementwise(a, b)

    def rule(g):
        ga = g * b.data
        gb = g * a.data
        return ga, _sum_to_vector(gb) if broadcast else gb

    return _op(a.data * b.data, (a, b), rule)


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    try:
        return {"add": add, "sub": sub, "mul": mul}[kind](a, b)
    except KeyError:
        raise ValueError(f"unknown elementwise kind: {kind!r}") from None


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    a = _as_tensor(a)
    c = float(c)
    return _op(a.data * c, (a,), lambda g: (g * c,))


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Scale each row x[..., i, :] by the scalar s[..., i].

    Used for position weights, aspect masks, and per-step validity masks.
    s must match x's shape without the last axis.
    """
    x, s = _as_tensor(x), _as_tensor(s)
    if s.shape != x.shape[:-1]:
        raise ValueError(f"scale_rows shapes incompatible: {x.shape} vs {s.shape}")

    def rule(g):
        return g * s.data[..., None], (g * x.data).sum(axis=-1)

    return _op(x.data * s.data[..., None], (x, s), rule)


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    mask = (a.data > 0).astype(np.float64)  # subgradient at exactly 0 is 0
    return _op(a.data * mask, (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _op(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))), np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def rule(g):
        return (g * out * (1.0 - out),)

    return _op(out, (a,), rule)


def activation(a: Tensor, kind: str) -> Tensor:
    try:
        return {"relu": relu, "tanh": tanh, "sigmoid": sigmoid}[kind](a)
    except KeyError:
        raise ValueError(f"unknown activation kind: {kind!r}") from None


# ---------------------------------------------------------------------------
# softmax family


def softmax(a: Tensor) -> Tensor:
    """Stable softmax along the last axis. Outputs sum to 1 per row."""
    a = _as_tensor(a)
    if np.isnan(a.data).any():
        raise ValueError("softmax input contains NaN")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def rule(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _op(out, (a,), rule)


def log_softmax(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if np.isnan(a.data).any():
        raise ValueError("log_softmax input contains NaN")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def rule(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return _op(out, (a,), rule)


def masked_softmax(a: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over positions where mask is 1; masked positions emit 0.

    mask is a constant 0/1 array of a's shape. Each row must have at
    least one valid position.
    """
    a = _as_tensor(a)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != a.shape:
        raise ValueError(f"masked_softmax mask shape {mask.shape} != input shape {a.shape}")
    if np.isnan(a.data).any():
        raise ValueError("masked_softmax input contains NaN")
    if (mask.sum(axis=-1) < 1).any():
        raise ValueError("masked_softmax requires at least one valid position per row")
    neg = np.where(mask > 0, a.data, -np.inf)
    shifted = neg - neg.max(axis=-1, keepdims=True)
    e = np.exp(shifted) * mask
    out = e / e.sum(axis=-1, keepdims=True)

    def rule(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _op(out, (a,), rule)


# ---------------------------------------------------------------------------
# reductions


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    axis = _check_axis(a, axis)

    def rule(g):
        if axis is None:
            return (np.full_like(a.data, float(g)),)
        return (np.repeat(np.expand_dims(g, axis), a.shape[axis], axis=axis),)

    return _op(a.data.sum(axis=axis), (a,), rule)


def reduce_mean(a: Tensor, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    axis = _check_axis(a, axis)
    count = a.data.size if axis is None else a.shape[axis]

    def rule(g):
        if axis is None:
            return (np.full_like(a.data, float(g) / count),)
        return (np.repeat(np.expand_dims(g, axis), count, axis=axis) / count,)

    return _op(a.data.mean(axis=axis), (a,), rule)


def reduce_max(a: Tensor, axis: int | None = None) -> Tensor:
    """Max reduction; gradient routes to the first argmax along the axis."""
    a = _as_tensor(a)
    axis = _check_axis(a, axis)
    if axis is None:
        flat_idx = int(a.data.argmax())
        mask = np.zeros_like(a.data)
        mask.reshape(-1)[flat_idx] = 1.0
    else:
        idx = a.data.argmax(axis=axis)
        mask = np.zeros_like(a.data)
        np.put_along_axis(mask, np.expand_dims(idx, axis), 1.0, axis=axis)

    def rule(g):
        if axis is None:
            return (mask * float(g),)
        return (mask * np.expand_dims(g, axis),)

    return _op(a.data.max(axis=axis), (a,), rule)


def reduce(a: Tensor, kind: str, axis: int | None = None) -> Tensor:
    try:
        return {"sum": reduce_sum, "mean": reduce_mean, "max": reduce_max}[kind](a, axis)
    except KeyError:
        raise ValueError(f"unknown reduce kind: {kind!r}") from None


def _check_axis(a: Tensor, axis: int | None) -> int | None:
    if axis is None:
        return None
    if not -a.ndim <= axis < a.ndim:
        raise ValueError(f"axis {axis} invalid for shape {a.shape}")
    return axis % a.ndim


# ---------------------------------------------------------------------------
# shape surgery


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat requires at least one tensor")
    axis = _check_axis(parts[0], axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def rule(g):
        return tuple(np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis) for i in range(len(parts)))

    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ValueError(f"concat shape mismatch: {[p.shape for p in parts]}") from exc
    return _op(data, tuple(parts), rule)


def narrow(a: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    """Contiguous slice [start, stop) along an axis, with gradient routing."""
    a = _as_tensor(a)
    axis = _check_axis(a, axis)
    if not (0 <= start < stop <= a.shape[axis]):
        raise ValueError(f"slice [{start}:{stop}] out of bounds for axis {axis} of shape {a.shape}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def rule(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _op(a.data[index], (a,), rule)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(shape)

    def rule(g):
        return (g.reshape(a.shape),)

    return _op(a.data.reshape(shape), (a,), rule)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table; gradients scatter-add into used rows.

    Row 0 is the padding row by convention and never receives gradient.
    """
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ValueError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(f"token id out of range for table of {table.shape[0]} rows")

    def rule(g):
        dW = np.zeros_like(table.data)
        np.add.at(dW, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        dW[0] = 0.0
        return (dW,)

    return _op(table.data[ids], (table,), rule)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    a = _as_tensor(a)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return a
    keep = (rng.random(a.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return _op(a.data * keep, (a,), lambda g: (g * keep,))
