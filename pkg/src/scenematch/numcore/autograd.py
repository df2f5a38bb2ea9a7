"""Minimal reverse-mode tape over float64 numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward()
walks the graph in reverse topological order accumulating gradients into
.grad. Only the operations the encoders and losses actually need are
implemented. Everything is float64; persisted artifacts downcast at their
own boundaries.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (pure evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # ---- introspection ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __float__(self) -> float:
        return float(self.data)

    def item(self) -> float:
        return float(self.data)

    # ---- graph machinery ----------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into .grad for every reachable tensor."""
        if grad is None:
            if self.data.ndim != 0:
                raise ValueError("backward() without an explicit gradient needs a scalar")
            grad = np.array(1.0)
        else:
            grad = np.asarray(grad, dtype=np.float64)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        _accumulate(self, grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ---- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None, keepdims=False):
        return tmax(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 or isinstance(shape[0], int) else shape[0])

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---- arithmetic ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out_data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        ad, bd = a.data, b.data
        if ad.ndim == 1 and bd.ndim == 1:          # dot product
            _accumulate(a, g * bd)
            _accumulate(b, g * ad)
        elif ad.ndim == 1:                          # (m,) @ (m,p) -> (p,)
            _accumulate(a, np.matmul(bd, g))
            _accumulate(b, np.outer(ad, g))
        elif bd.ndim == 1:                          # (..,n,m) @ (m,) -> (..,n)
            _accumulate(a, _unbroadcast(np.matmul(g[..., :, None], bd[None, :]), ad.shape))
            _accumulate(b, _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g[..., :, None])[..., 0], bd.shape))
        else:                                       # batched / plain matrix product
            _accumulate(a, _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape))
            _accumulate(b, _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape))

    return _make(out_data, (a, b), backward)


# ---- shape ops ----------------------------------------------------------


def index(t: Tensor, key) -> Tensor:
    """Basic (slice / int / tuple-of-slices) indexing."""
    out_data = t.data[key]

    def backward(g):
        full = np.zeros_like(t.data)
        full[key] += g
        _accumulate(t, full)

    return _make(out_data, (t,), backward)


def reshape(t: Tensor, shape) -> Tensor:
    out_data = t.data.reshape(shape)

    def backward(g):
        _accumulate(t, g.reshape(t.data.shape))

    return _make(out_data, (t,), backward)


def transpose(t: Tensor, axes=None) -> Tensor:
    out_data = np.transpose(t.data, axes)

    def backward(g):
        inv = None if axes is None else np.argsort(axes)
        _accumulate(t, np.transpose(g, inv))

    return _make(out_data, (t,), backward)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _make(out_data, ts, backward)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out_data = np.stack([t.data for t in ts], axis=axis)

    def backward(g):
        for i, t in enumerate(ts):
            _accumulate(t, np.take(g, i, axis=axis))

    return _make(out_data, ts, backward)


def gather_rows(t: Tensor, idx) -> Tensor:
    """Rows t[idx] for an integer index array; duplicates accumulate on backward."""
    idx = np.asarray(idx, dtype=np.intp)
    out_data = t.data[idx]

    def backward(g):
        full = np.zeros_like(t.data)
        np.add.at(full, idx, g)
        _accumulate(t, full)

    return _make(out_data, (t,), backward)


def take_along_axis(t: Tensor, idx: np.ndarray, axis: int) -> Tensor:
    """2-D take_along_axis with a constant index array (e.g. an argsort)."""
    if t.data.ndim != 2:
        raise ValueError("take_along_axis supports 2-D tensors only")
    idx = np.asarray(idx, dtype=np.intp)
    out_data = np.take_along_axis(t.data, idx, axis=axis)

    def backward(g):
        full = np.zeros_like(t.data)
        if axis == 0:
            cols = np.broadcast_to(np.arange(idx.shape[1]), idx.shape)
            np.add.at(full, (idx, cols), g)
        else:
            rows = np.broadcast_to(np.arange(idx.shape[0])[:, None], idx.shape)
            np.add.at(full, (rows, idx), g)
        _accumulate(t, full)

    return _make(out_data, (t,), backward)


def segment_sum(t: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of t into num_segments buckets given per-row segment ids."""
    seg = np.asarray(segment_ids, dtype=np.intp)
    out_data = np.zeros((num_segments,) + t.data.shape[1:], dtype=np.float64)
    np.add.at(out_data, seg, t.data)

    def backward(g):
        _accumulate(t, g[seg])

    return _make(out_data, (t,), backward)


# ---- reductions ---------------------------------------------------------


def tsum(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = t.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(t, np.broadcast_to(g, t.data.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(t, np.broadcast_to(g, t.data.shape).copy())

    return _make(out_data, (t,), backward)


def tmean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = t.data.size if axis is None else t.data.shape[axis]
    return mul(tsum(t, axis=axis, keepdims=keepdims), 1.0 / count)


def tmax(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Max reduction; ties route the gradient to the lowest index (np.argmax)."""
    out_data = t.data.max(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            mask = np.zeros(t.data.size)
            mask[np.argmax(t.data)] = 1.0
            _accumulate(t, (mask * g).reshape(t.data.shape))
        else:
            idx = np.expand_dims(np.argmax(t.data, axis=axis), axis)
            mask = np.zeros_like(t.data)
            np.put_along_axis(mask, idx, 1.0, axis=axis)
            gg = g if keepdims else np.expand_dims(g, axis)
            _accumulate(t, mask * gg)

    return _make(out_data, (t,), backward)


# ---- elementwise nonlinearities ------------------------------------------


def relu(t) -> Tensor:
    t = as_tensor(t)
    out_data = np.maximum(t.data, 0.0)

    def backward(g):
        _accumulate(t, g * (t.data > 0.0))

    return _make(out_data, (t,), backward)


def leaky_relu(t, slope: float = 0.2) -> Tensor:
    t = as_tensor(t)
    out_data = np.where(t.data >= 0.0, t.data, slope * t.data)

    def backward(g):
        _accumulate(t, g * np.where(t.data >= 0.0, 1.0, slope))

    return _make(out_data, (t,), backward)


def exp(t) -> Tensor:
    t = as_tensor(t)
    out_data = np.exp(t.data)

    def backward(g):
        _accumulate(t, g * out_data)

    return _make(out_data, (t,), backward)


def log(t) -> Tensor:
    t = as_tensor(t)
    out_data = np.log(t.data)

    def backward(g):
        _accumulate(t, g / t.data)

    return _make(out_data, (t,), backward)


def sqrt(t) -> Tensor:
    t = as_tensor(t)
    out_data = np.sqrt(t.data)

    def backward(g):
        _accumulate(t, g / (2.0 * out_data))

    return _make(out_data, (t,), backward)


def softmax(t, axis: int = -1) -> Tensor:
    """Numerically shifted softmax along one axis."""
    t = as_tensor(t)
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        s = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(t, out_data * (g - s))

    return _make(out_data, (t,), backward)


def l2_normalize_rows(t: Tensor) -> Tensor:
    """Scale each row of a 2-D tensor to unit L2 norm (rows must be nonzero)."""
    sq = tsum(mul(t, t), axis=1, keepdims=True)
    return div(t, sqrt(sq))
