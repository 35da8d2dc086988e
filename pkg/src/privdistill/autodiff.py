"""Minimal reverse-mode automatic differentiation over numpy float64 arrays.

Every operation builds a graph of `Var` nodes; calling `backward` on a
scalar loss accumulates exact gradients into the leaves. The primitive
set is fixed: dense algebra (matmul, +, -, *, broadcasted), activations
(relu, sigmoid, tanh), softmax, cross-entropy, entropy, L1/L2 style
reductions, exp/log/abs/square, sum/mean, column slicing and row
gathering. Anything else is a GraphError, never a silent miscomputation.
"""

import numpy as np

from .errors import GraphError, ShapeError


def _as_array(x):
    a = np.asarray(x, dtype=np.float64)
    return a


def check_finite(a, what="value"):
    if not np.all(np.isfinite(a)):
        raise ShapeError(f"non-finite {what} encountered")
    return a


class Var:
    """A node in the differentiation graph holding a float64 array."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, _parents=(), _backward=None):
        self.value = _as_array(value)
        if _backward is None:
            # leaf: reject NaN/Inf at the graph boundary
            check_finite(self.value, "leaf value")
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.value.shape

    # operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x):
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(grad, shape):
    """Reduce `grad` back to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _accum(var, grad):
    grad = _unbroadcast(np.asarray(grad, dtype=np.float64), var.value.shape)
    if var.grad is None:
        var.grad = grad
    else:
        var.grad = var.grad + grad


def _node(value, parents, backward):
    return Var(value, requires_grad=False, _parents=tuple(parents), _backward=backward)


# primitives -----------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out_val = a.value + b.value

    def bwd(g):
        _accum(a, g)
        _accum(b, g)

    return _node(out_val, (a, b), bwd)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    out_val = a.value - b.value

    def bwd(g):
        _accum(a, g)
        _accum(b, -g)

    return _node(out_val, (a, b), bwd)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out_val = a.value * b.value

    def bwd(g):
        _accum(a, g * b.value)
        _accum(b, g * a.value)

    return _node(out_val, (a, b), bwd)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(
            f"matmul shape mismatch: {a.value.shape} @ {b.value.shape}"
        )
    out_val = a.value @ b.value

    def bwd(g):
        _accum(a, g @ b.value.T)
        _accum(b, a.value.T @ g)

    return _node(out_val, (a, b), bwd)


def relu(a):
    a = _wrap(a)
    mask = a.value > 0.0
    out_val = np.where(mask, a.value, 0.0)

    def bwd(g):
        _accum(a, g * mask)

    return _node(out_val, (a,), bwd)


def sigmoid(a):
    a = _wrap(a)
    out_val = 0.5 * (1.0 + np.tanh(0.5 * a.value))

    def bwd(g):
        _accum(a, g * out_val * (1.0 - out_val))

    return _node(out_val, (a,), bwd)


def tanh(a):
    a = _wrap(a)
    out_val = np.tanh(a.value)

    def bwd(g):
        _accum(a, g * (1.0 - out_val * out_val))

    return _node(out_val, (a,), bwd)


def exp(a):
    a = _wrap(a)
    out_val = np.exp(a.value)

    def bwd(g):
        _accum(a, g * out_val)

    return _node(out_val, (a,), bwd)


def log(a):
    a = _wrap(a)
    out_val = np.log(a.value)

    def bwd(g):
        _accum(a, g / a.value)

    return _node(out_val, (a,), bwd)


def absolute(a):
    a = _wrap(a)
    out_val = np.abs(a.value)

    def bwd(g):
        _accum(a, g * np.sign(a.value))

    return _node(out_val, (a,), bwd)


def square(a):
    a = _wrap(a)
    out_val = a.value * a.value

    def bwd(g):
        _accum(a, g * 2.0 * a.value)

    return _node(out_val, (a,), bwd)


def vsum(a, axis=None):
    a = _wrap(a)
    out_val = a.value.sum(axis=axis)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.value.shape))
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.value.shape))

    return _node(out_val, (a,), bwd)


def vmean(a, axis=None):
    a = _wrap(a)
    out_val = a.value.mean(axis=axis)
    count = a.value.size if axis is None else a.value.shape[axis]

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g / count, a.value.shape))
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g / count, axis), a.value.shape))

    return _node(out_val, (a,), bwd)


def softmax_rows(a):
    """Row-wise softmax of a 2-D array."""
    a = _wrap(a)
    if a.value.ndim != 2:
        raise ShapeError("softmax expects a 2-D batch of logits")
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out_val = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        dot = (g * out_val).sum(axis=1, keepdims=True)
        _accum(a, out_val * (g - dot))

    return _node(out_val, (a,), bwd)


_PROB_FLOOR = 1e-12


def cross_entropy(probs, labels):
    """Mean negative log-probability of the integer `labels` under `probs`."""
    probs = _wrap(probs)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.value.ndim != 2 or labels.shape != (probs.value.shape[0],):
        raise ShapeError("cross_entropy expects (n,K) probs and (n,) labels")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= probs.value.shape[1]:
        raise ShapeError("label id outside [0, K)")
    n = probs.value.shape[0]
    picked = np.maximum(probs.value[np.arange(n), labels], _PROB_FLOOR)
    out_val = -np.log(picked).mean()

    def bwd(g):
        grad = np.zeros_like(probs.value)
        grad[np.arange(n), labels] = -g / (n * picked)
        _accum(probs, grad)

    return _node(out_val, (probs,), bwd)


def entropy_rows(probs):
    """Per-row Shannon entropy H = -sum p ln p of a 2-D probability array."""
    probs = _wrap(probs)
    if probs.value.ndim != 2:
        raise ShapeError("entropy expects a 2-D probability batch")
    p = np.maximum(probs.value, _PROB_FLOOR)
    out_val = -(probs.value * np.log(p)).sum(axis=1)

    def bwd(g):
        _accum(probs, -g[:, None] * (np.log(p) + 1.0))

    return _node(out_val, (probs,), bwd)


def xlogx_sum(p):
    """sum_k p_k ln p_k of a 1-D probability vector (negative entropy)."""
    p = _wrap(p)
    if p.value.ndim != 1:
        raise ShapeError("xlogx_sum expects a 1-D vector")
    safe = np.maximum(p.value, _PROB_FLOOR)
    out_val = (p.value * np.log(safe)).sum()

    def bwd(g):
        _accum(p, g * (np.log(safe) + 1.0))

    return _node(out_val, (p,), bwd)


def clip(a, lo, hi):
    a = _wrap(a)
    out_val = np.clip(a.value, lo, hi)
    inside = (a.value > lo) & (a.value < hi)

    def bwd(g):
        _accum(a, g * inside)

    return _node(out_val, (a,), bwd)


def slice_cols(a, start, stop):
    a = _wrap(a)
    if a.value.ndim != 2:
        raise ShapeError("slice_cols expects a 2-D array")
    out_val = a.value[:, start:stop]

    def bwd(g):
        grad = np.zeros_like(a.value)
        grad[:, start:stop] = g
        _accum(a, grad)

    return _node(out_val, (a,), bwd)


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every reachable leaf's .grad."""
    if not isinstance(loss, Var):
        raise GraphError("backward expects a Var")
    if loss.value.shape != ():
        raise GraphError("backward requires a scalar loss")
    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    loss.grad = np.ones(())
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
