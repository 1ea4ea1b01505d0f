"""A small reverse-mode tape over numpy arrays.

Nodes are appended to the tape in creation order, which is already a
topological order, so ``backward`` is one reversed sweep.  Constants are
never recorded.  Only the primitives the hypernetwork needs are provided.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Node",
    "Tape",
    "concat",
    "exp",
    "log",
    "logsumexp",
    "mean",
    "permute",
    "relu",
    "softmax",
    "softplus",
    "sqrt",
    "sum_",
]


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value) -> Node:
        return Node(self, np.asarray(value, dtype=float), (), requires_grad=True)

    def const(self, value) -> Node:
        return Node(self, np.asarray(value, dtype=float), (), requires_grad=False)

    def backward(self, out: Node) -> None:
        """Fill ``.grad`` of every recorded node with d(out)/d(node)."""
        if out.value.size != 1:
            raise ValueError("backward needs a scalar output")
        for node in self.nodes:
            node.grad = None
        out.grad = np.ones_like(out.value)
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            for parent, vjp in node.parents:
                g = vjp(node.grad)
                parent.grad = g if parent.grad is None else parent.grad + g


class Node:
    __slots__ = ("tape", "value", "parents", "grad", "requires_grad")
    __array_priority__ = 100

    def __init__(self, tape: Tape, value: np.ndarray, parents, requires_grad: bool):
        self.tape = tape
        self.value = value
        self.parents = tuple(parents)
        self.grad = None
        self.requires_grad = requires_grad
        if requires_grad:
            tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def _wrap(self, other) -> Node:
        return other if isinstance(other, Node) else self.tape.const(other)

    def __add__(self, other):
        a, b = self, self._wrap(other)
        return _op(
            a.value + b.value,
            (a, lambda g: _unbroadcast(g, a.shape)),
            (b, lambda g: _unbroadcast(g, b.shape)),
        )

    __radd__ = __add__

    def __neg__(self):
        return _op(-self.value, (self, lambda g: -g))

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        a, b = self, self._wrap(other)
        return _op(
            a.value * b.value,
            (a, lambda g: _unbroadcast(g * b.value, a.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self, self._wrap(other)
        return _op(
            a.value / b.value,
            (a, lambda g: _unbroadcast(g / b.value, a.shape)),
            (b, lambda g: _unbroadcast(-g * a.value / b.value**2, b.shape)),
        )

    def __rtruediv__(self, other):
        return self._wrap(other) / self

    def __pow__(self, k: float):
        a = self
        return _op(a.value**k, (a, lambda g: g * k * a.value ** (k - 1)))

    def __matmul__(self, other):
        a, b = self, self._wrap(other)
        return _op(
            a.value @ b.value,
            (a, lambda g: _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape)),
            (b, lambda g: _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape)),
        )

    def __getitem__(self, idx):
        a = self

        def vjp(g):
            out = np.zeros_like(a.value)
            np.add.at(out, idx, g)
            return out

        return _op(a.value[idx], (a, vjp))

    def reshape(self, *shape):
        a = self
        return _op(a.value.reshape(*shape), (a, lambda g: g.reshape(a.shape)))


def _op(value, *parents) -> Node:
    live = [(p, f) for p, f in parents if p.requires_grad]
    tape = parents[0][0].tape
    return Node(tape, value, live, requires_grad=bool(live))


def exp(a: Node) -> Node:
    v = np.exp(a.value)
    return _op(v, (a, lambda g: g * v))


def log(a: Node) -> Node:
    return _op(np.log(a.value), (a, lambda g: g / a.value))


def sqrt(a: Node) -> Node:
    v = np.sqrt(a.value)
    return _op(v, (a, lambda g: 0.5 * g / v))


def relu(a: Node) -> Node:
    mask = a.value > 0
    return _op(np.where(mask, a.value, 0.0), (a, lambda g: g * mask))


def softplus(a: Node) -> Node:
    x = a.value
    v = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return _op(v, (a, lambda g: g * sig))


def softmax(a: Node, axis: int = -1) -> Node:
    z = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _op(s, (a, lambda g: s * (g - np.sum(g * s, axis=axis, keepdims=True))))


def logsumexp(a: Node, axis: int = -1) -> Node:
    m = a.value.max(axis=axis, keepdims=True)
    e = np.exp(a.value - m)
    tot = e.sum(axis=axis, keepdims=True)
    v = (np.log(tot) + m).squeeze(axis)
    s = e / tot
    return _op(v, (a, lambda g: np.expand_dims(g, axis) * s))


def sum_(a: Node, axis=None, keepdims: bool = False) -> Node:
    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape).copy()

    return _op(np.sum(a.value, axis=axis, keepdims=keepdims), (a, vjp))


def mean(a: Node, axis=None, keepdims: bool = False) -> Node:
    count = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def concat(parts: list[Node], axis: int = -1) -> Node:
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def make(i):
        return lambda g: np.split(g, cuts, axis=axis)[i]

    return _op(
        np.concatenate([p.value for p in parts], axis=axis),
        *[(p, make(i)) for i, p in enumerate(parts)],
    )


def permute(a: Node, perm: np.ndarray, axis: int = -1) -> Node:
    """Reorder along ``axis`` by an index permutation (e.g. from ``argsort``)."""
    inv = np.argsort(perm, axis=axis)
    return _op(
        np.take_along_axis(a.value, perm, axis=axis),
        (a, lambda g: np.take_along_axis(g, inv, axis=axis)),
    )
