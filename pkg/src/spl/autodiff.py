"""Tape-based reverse-mode differentiation over numpy arrays.

Only the handful of operations the gating networks and losses need are
provided.  Each :class:`Var` records its parents and a closure that maps the
output gradient to parent gradients; :func:`backward` walks the graph in
reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Var:
    __slots__ = ("value", "grad", "parents", "vjp", "requires_grad")

    def __init__(self, value, parents=(), vjp=None, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents: tuple[Var, ...] = tuple(parents)
        self.vjp = vjp
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self) -> str:
        return f"Var(shape={self.value.shape})"


def constant(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def parameter(x) -> Var:
    return Var(x, requires_grad=True)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b) -> Var:
    a, b = constant(a), constant(b)
    return Var(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Var:
    a, b = constant(a), constant(b)
    return Var(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def matmul(a, b) -> Var:
    a, b = constant(a), constant(b)
    return Var(a.value @ b.value, (a, b), lambda g: (g @ b.value.T, a.value.T @ g))


def relu(a: Var) -> Var:
    mask = a.value > 0
    return Var(a.value * mask, (a,), lambda g: (g * mask,))


def tanh(a: Var) -> Var:
    t = np.tanh(a.value)
    return Var(t, (a,), lambda g: (g * (1.0 - t * t),))


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(a: Var) -> Var:
    s = sigmoid_array(a.value)
    return Var(s, (a,), lambda g: (g * s * (1.0 - s),))


def total(a: Var) -> Var:
    return Var(a.value.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Var) -> Var:
    n = a.value.size
    return Var(a.value.mean(), (a,), lambda g: (np.full(a.shape, g / n),))


def bce_with_logits(logits: Var, targets) -> Var:
    """Per-row sum of binary cross-entropies, shape ``(batch,)``."""
    t = np.asarray(targets, dtype=np.float64)
    z = logits.value
    # log(1 + e^z) - t z, written stably
    val = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    s = sigmoid_array(z)
    return Var(val.sum(axis=-1), (logits,), lambda g: (g[..., None] * (s - t),))


class SegmentSoftmax:
    """Softmax over consecutive segments of the selected ``columns``.

    Segment ``i`` covers the next ``sizes[i]`` entries of ``columns``.
    """

    def __init__(self, columns: np.ndarray, sizes: Sequence[int]):
        self.columns = np.asarray(columns, dtype=np.int64)
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)
        self.seg = np.repeat(np.arange(len(self.sizes)), self.sizes)

    def apply(self, z: np.ndarray) -> np.ndarray:
        """Softmax values for the selected columns, shape ``(batch, len(columns))``."""
        sel = z[:, self.columns]
        if sel.shape[1] == 0:
            return sel
        top = np.maximum.reduceat(sel, self.starts, axis=1)
        e = np.exp(sel - top[:, self.seg])
        den = np.add.reduceat(e, self.starts, axis=1)
        return e / den[:, self.seg]

    def vjp(self, s: np.ndarray, g: np.ndarray) -> np.ndarray:
        if s.shape[1] == 0:
            return g
        dot = np.add.reduceat(g * s, self.starts, axis=1)
        return s * (g - dot[:, self.seg])


def custom(inputs: Sequence[Var], value, vjp: Callable) -> Var:
    """Wrap an externally computed value with a hand-written vector-Jacobian product."""
    return Var(value, tuple(inputs), vjp)


def backward(loss: Var) -> None:
    """Accumulate ``d loss / d v`` into ``v.grad`` for every ``v`` needing it."""
    order: list[Var] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        v, done = stack.pop()
        if done:
            order.append(v)
            continue
        if id(v) in seen or not v.requires_grad:
            continue
        seen.add(id(v))
        stack.append((v, True))
        for p in v.parents:
            stack.append((p, False))
    loss.grad = np.ones_like(loss.value)
    for v in reversed(order):
        if v.vjp is None or v.grad is None:
            continue
        for p, g in zip(v.parents, v.vjp(v.grad)):
            if not p.requires_grad:
                continue
            p.grad = g if p.grad is None else p.grad + g
