"""Reverse-mode autodiff over dense numpy arrays.

A Tensor wraps one ndarray plus an optional grad buffer and a backward
closure. Graphs are built eagerly by the op functions below and unwound
by Tensor.backward() in reverse topological order. float32 is the
production dtype; float64 is allowed for validation runs (grad checks).
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np


class NumericsError(ValueError):
    """Raised for invalid numerics inputs (shape mismatch, non-finite data)."""


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (forward-only evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _as_array(x, dtype=None) -> np.ndarray:
    if isinstance(x, (np.ndarray, np.generic)):
        arr = np.asarray(x)
        return arr if dtype is None else arr.astype(dtype, copy=False)
    return np.asarray(x, dtype=dtype or np.float32)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None, name=None):
        self.data = _as_array(data)
        if not np.issubdtype(self.data.dtype, np.floating):
            self.data = self.data.astype(np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def param(data, name=None) -> "Tensor":
        """A leaf tensor that accumulates gradients."""
        return Tensor(data, requires_grad=True, name=name)

    @staticmethod
    def const(data) -> "Tensor":
        return Tensor(data, requires_grad=False)

    # -- basic protocol ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    def zero_grad(self):
        self.grad = None

    def assert_finite(self, what: str = "tensor"):
        if not np.all(np.isfinite(self.data)):
            raise NumericsError(f"non-finite values in {what}")
        return self

    # -- autodiff ---------------------------------------------------------------

    def backward(self):
        """Reverse-mode sweep from this scalar; accumulates into .grad of leaves."""
        if self.data.ndim != 0 and self.data.size != 1:
            raise NumericsError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- operator sugar -----------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __sub__(self, other):
        return add(self, -_wrap(other))

    def __rsub__(self, other):
        return add(_wrap(other), -self)

    def __truediv__(self, other):
        other = _wrap(other)
        return mul(self, reciprocal(other))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def sum(self):
        return sum_all(self)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor.const(np.asarray(x, dtype=np.float32))


def _make(data, parents, backward) -> Tensor:
    """Create an op result; drops the graph when no parent needs grads."""
    if _GRAD_ENABLED and any(p.requires_grad or p._parents for p in parents):
        out = Tensor(data, requires_grad=False, parents=parents, backward=backward)
        out.requires_grad = True  # interior node: participates in the sweep
        return out
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` (reverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- primitive ops ------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def reciprocal(a: Tensor) -> Tensor:
    out_data = 1.0 / a.data

    def backward(g):
        a._accumulate(_unbroadcast(-g * out_data * out_data, a.data.shape))

    return _make(out_data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D or same-batch 3-D matrix product (no batch broadcasting)."""
    if a.data.ndim == 3 and b.data.ndim == 3 and a.data.shape[0] != b.data.shape[0]:
        raise NumericsError("batched matmul requires matching batch dims")
    out_data = a.data @ b.data

    def backward(g):
        a._accumulate(g @ np.swapaxes(b.data, -1, -2))
        b._accumulate(np.swapaxes(a.data, -1, -2) @ g)

    return _make(out_data, (a, b), backward)


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return _make(out_data, (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    out_data = np.transpose(a.data, axes)
    inv = np.argsort(axes)

    def backward(g):
        a._accumulate(np.transpose(g, inv))

    return _make(out_data, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    out_data = a.data.sum()

    def backward(g):
        a._accumulate(np.broadcast_to(g, a.data.shape))

    return _make(out_data, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """tanh-approximation GELU."""
    c = math.sqrt(2.0 / math.pi)
    x = a.data
    inner = c * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = c * (1.0 + 3 * 0.044715 * x**2)
        da = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
        a._accumulate(g * da)

    return _make(out_data, (a,), backward)


def softmax_last(a: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis."""
    x = a.data
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    w = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * w).sum(axis=-1, keepdims=True)
        a._accumulate(w * (g - dot))

    return _make(w, (a,), backward)


def log_softmax_last(a: Tensor) -> Tensor:
    x = a.data
    m = x.max(axis=-1, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse

    def backward(g):
        sm = np.exp(out_data)
        a._accumulate(g - sm * g.sum(axis=-1, keepdims=True))

    return _make(out_data, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis with learned gain/bias."""
    x = a.data
    n = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def backward(g):
        bias._accumulate(_unbroadcast(g, bias.data.shape))
        gain._accumulate(_unbroadcast(g * xhat, gain.data.shape))
        dxhat = g * gain.data
        # dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
        da = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        a._accumulate(da)

    return _make(out_data, (a, gain, bias), backward)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Rows of `table` selected by integer ids; scatter-add on backward."""
    ids = np.asarray(ids, dtype=np.int64)
    out_data = table.data[ids]

    def backward(g):
        acc = np.zeros_like(table.data)
        np.add.at(acc, ids, g)
        table._accumulate(acc)

    return _make(out_data, (table,), backward)


def take_per_row(a: Tensor, idx: np.ndarray) -> Tensor:
    """out[i] = a[i, idx[i]] for a 2-D tensor."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.data.shape[0])
    out_data = a.data[rows, idx]

    def backward(g):
        acc = np.zeros_like(a.data)
        acc[rows, idx] = g
        a._accumulate(acc)

    return _make(out_data, (a,), backward)


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0."""
    if p <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return mul(a, Tensor.const(keep))
