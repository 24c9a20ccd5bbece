"""Minimal reverse-mode autodiff on dense float64 numpy arrays.

The graph is recorded implicitly: every operation returns a new Tensor that
remembers its parents and a closure accumulating gradients into them.  A
single backward() traversal in reverse topological order produces gradients
for every leaf with requires_grad=True.  Tensors are treated as immutable
once created; optimizers build fresh Tensors instead of mutating data.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` (inverse of numpy bias-style broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Dense float64 array with optional gradient tracking."""

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None,
                 name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data.item())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph walk ---------------------------------------------------------

    def _topo(self):
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            # reversed() keeps the visit order identical to recursive DFS,
            # so replays are bit-identical
            for p in reversed(node._parents):
                stack.append((p, False))
        return order

    def backward(self):
        """Accumulate gradients of this scalar into every reachable leaf."""
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar, got shape {self.shape}")
        order = self._topo()
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self, axis=None):
        return tsum(self, axis=axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _binary(a, b, fwd, bwd_a, bwd_b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = fwd(a.data, b.data)
    requires = a.requires_grad or b.requires_grad
    out = Tensor(out_data, requires_grad=requires, parents=(a, b))

    def backward_fn(g):
        if a.requires_grad or a._parents:
            ga = _unbroadcast(bwd_a(g, a.data, b.data), a.data.shape)
            a.grad = ga if a.grad is None else a.grad + ga
        if b.requires_grad or b._parents:
            gb = _unbroadcast(bwd_b(g, a.data, b.data), b.data.shape)
            b.grad = gb if b.grad is None else b.grad + gb

    out._backward_fn = backward_fn
    return out


def add(a, b):
    return _binary(a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b):
    return _binary(a, b, lambda x, y: x / y,
                   lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} x {b.shape} do not conform")
    return _binary(a, b, lambda x, y: x @ y,
                   lambda g, x, y: g @ y.T, lambda g, x, y: x.T @ g)


def affine(x, weight, bias):
    """x[n,d] @ weight[d,k] + bias[k]."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if bias.data.ndim != 1 or bias.data.shape[0] != weight.data.shape[1]:
        raise ShapeError(f"bias shape {bias.shape} does not match weight {weight.shape}")
    return add(matmul(x, weight), bias)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0.0  # subgradient 0 at the kink
    out = Tensor(np.where(mask, x.data, 0.0), requires_grad=x.requires_grad,
                 parents=(x,))

    def backward_fn(g):
        gx = g * mask
        x.grad = gx if x.grad is None else x.grad + gx

    out._backward_fn = backward_fn
    return out


def texp(x):
    x = as_tensor(x)
    out_data = np.exp(x.data)
    out = Tensor(out_data, requires_grad=x.requires_grad, parents=(x,))

    def backward_fn(g):
        gx = g * out_data
        x.grad = gx if x.grad is None else x.grad + gx

    out._backward_fn = backward_fn
    return out


def tlog(x):
    x = as_tensor(x)
    out = Tensor(np.log(x.data), requires_grad=x.requires_grad, parents=(x,))

    def backward_fn(g):
        gx = g / x.data
        x.grad = gx if x.grad is None else x.grad + gx

    out._backward_fn = backward_fn
    return out


def tsum(x, axis=None):
    x = as_tensor(x)
    out = Tensor(x.data.sum(axis=axis), requires_grad=x.requires_grad, parents=(x,))

    def backward_fn(g):
        if axis is None:
            gx = np.broadcast_to(g, x.data.shape).copy()
        else:
            gx = np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy()
        x.grad = gx if x.grad is None else x.grad + gx

    out._backward_fn = backward_fn
    return out


def take(x, indices):
    """Select elements of a 1-D tensor: out[i] = x[indices[i]]."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    out = Tensor(x.data[idx], requires_grad=x.requires_grad, parents=(x,))

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        x.grad = gx if x.grad is None else x.grad + gx

    out._backward_fn = backward_fn
    return out


def take_per_row(x, indices):
    """Per-row column pick on a 2-D tensor: out[i] = x[i, indices[i]]."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    rows = np.arange(x.data.shape[0])
    out = Tensor(x.data[rows, idx], requires_grad=x.requires_grad, parents=(x,))

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rows, idx), g)
        x.grad = gx if x.grad is None else x.grad + gx

    out._backward_fn = backward_fn
    return out


def reshape(x, shape):
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape), requires_grad=x.requires_grad, parents=(x,))

    def backward_fn(g):
        gx = g.reshape(x.data.shape)
        x.grad = gx if x.grad is None else x.grad + gx

    out._backward_fn = backward_fn
    return out


def logsumexp(x, axis):
    """Stabilized log-sum-exp along an axis; the max shift is a constant."""
    x = as_tensor(x)
    shift = np.max(x.data, axis=axis, keepdims=True)
    shifted = sub(x, Tensor(shift))
    lse = tlog(tsum(texp(shifted), axis=axis))
    return add(lse, Tensor(np.squeeze(shift, axis=axis)))


def grads_of(output: Tensor, leaves) -> dict:
    """Run backward on a scalar and return {leaf name or index: gradient}.

    Leaves absent from the graph get zero gradients of matching shape.
    """
    output.backward()
    out = {}
    for key, leaf in _iter_leaves(leaves):
        out[key] = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
    return out


def _iter_leaves(leaves):
    if isinstance(leaves, dict):
        return list(leaves.items())
    return list(enumerate(leaves))


def finite_diff_check(fn, point: Tensor, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    fn maps a Tensor to a scalar Tensor.  Relative error uses
    |analytic - numeric| / max(1, |analytic|) per coordinate.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = Tensor(point.data.copy(), requires_grad=True)
    out = fn(x)
    out.backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)

    flat = x.data.ravel()
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        f_plus = fn(Tensor(bumped.reshape(x.data.shape))).item()
        bumped[i] = flat[i] - h
        f_minus = fn(Tensor(bumped.reshape(x.data.shape))).item()
        numeric[i] = (f_plus - f_minus) / (2.0 * h)
    numeric = numeric.reshape(x.data.shape)

    denom = np.maximum(1.0, np.abs(analytic))
    err = np.abs(analytic - numeric) / denom
    return float(err.max()) if err.size else 0.0
