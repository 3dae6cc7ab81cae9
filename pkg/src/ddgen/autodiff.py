"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery to differentiate the training losses: affine layers,
tanh/softplus, gathers, and stable mean/logsumexp reductions. Everything is
float64 and single-threaded, so gradients are bit-reproducible.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """A node in the tape: a value plus how to push gradients to parents."""

    __slots__ = ("value", "parents", "backward_fn", "grad")

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.backward_fn = backward_fn
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    # ---- arithmetic ----

    def __add__(self, other):
        other = as_var(other)
        out = Var(self.value + other.value, (self, other))

        def bw(g):
            return (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))

        out.backward_fn = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Var(-self.value, (self,))
        out.backward_fn = lambda g: (-g,)
        return out

    def __sub__(self, other):
        return self + (-as_var(other))

    def __rsub__(self, other):
        return as_var(other) + (-self)

    def __mul__(self, other):
        other = as_var(other)
        out = Var(self.value * other.value, (self, other))

        def bw(g):
            return (
                _unbroadcast(g * other.value, self.shape),
                _unbroadcast(g * self.value, other.shape),
            )

        out.backward_fn = bw
        return out

    __rmul__ = __mul__

    def matmul(self, other):
        other = as_var(other)
        out = Var(self.value @ other.value, (self, other))

        def bw(g):
            return (g @ other.value.T, self.value.T @ g)

        out.backward_fn = bw
        return out

    # ---- nonlinearities ----

    def tanh(self):
        y = np.tanh(self.value)
        out = Var(y, (self,))
        out.backward_fn = lambda g: (g * (1.0 - y * y),)
        return out

    def softplus(self):
        # log(1 + e^x), computed without overflow for large |x|
        y = np.logaddexp(0.0, self.value)
        sig = np.exp(self.value - y)  # sigmoid without overflow for large |x|
        out = Var(y, (self,))
        out.backward_fn = lambda g: (g * sig,)
        return out

    # ---- indexing / reshaping ----

    def take(self, indices):
        """Gather along the first axis with an arbitrary index array."""
        idx = np.asarray(indices)
        out = Var(self.value[idx], (self,))

        def bw(g):
            grad = np.zeros_like(self.value)
            np.add.at(grad, idx, g)
            return (grad,)

        out.backward_fn = bw
        return out

    def reshape(self, *shape):
        out = Var(self.value.reshape(*shape), (self,))
        out.backward_fn = lambda g: (g.reshape(self.shape),)
        return out

    # ---- reductions ----

    def sum(self, axis=None):
        out = Var(self.value.sum(axis=axis), (self,))

        def bw(g):
            if axis is None:
                return (np.broadcast_to(g, self.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), self.shape).copy(),)

        out.backward_fn = bw
        return out

    def mean(self, axis=None):
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / count)

    def logsumexp(self, axis=None):
        """Max-shifted logsumexp; safe for inputs up to +-1e4 and beyond."""
        m = self.value.max(axis=axis, keepdims=True)
        shifted = np.exp(self.value - m)
        total = shifted.sum(axis=axis, keepdims=True)
        y = (m + np.log(total)).squeeze() if axis is None else np.squeeze(m + np.log(total), axis=axis)
        softmax = shifted / total
        out = Var(y, (self,))

        def bw(g):
            if axis is None:
                return (g * softmax,)
            return (np.expand_dims(g, axis) * softmax,)

        out.backward_fn = bw
        return out

    def logmeanexp(self, axis=None):
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.logsumexp(axis=axis) + (-np.log(count))


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def backward(root: Var) -> None:
    """Accumulate gradients of the scalar `root` into every reachable node."""
    if root.value.size != 1:
        raise ValueError("backward requires a scalar root")
    order: list[Var] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.backward_fn is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            parent.grad = parent.grad + g
