"""Dense float32 tensors with a reverse-mode tape.

Every differentiable operation appends its output to the active :class:`Tape`
together with a closure mapping the output gradient to input gradients.
Because outputs are recorded in creation order the tape is already a
topological order and :func:`backward` simply walks it in reverse.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from ..errors import (
    IndexOutOfRange,
    NonFiniteValue,
    NonPositiveTemperature,
    NonScalarLoss,
    ShapeMismatch,
)

MAX_RANK = 3
DTYPE = np.float32

_state = threading.local()


class Tape:
    """Ordered record of differentiable operations since the last clear."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def record(self, t: "Tensor") -> None:
        self.nodes.append(t)

    def clear(self) -> None:
        for t in self.nodes:
            t._backward = None
            t._parents = ()
            t._g = None
        self.nodes = []

    def __len__(self):
        return len(self.nodes)


def get_tape() -> Tape:
    tape = getattr(_state, "tape", None)
    if tape is None:
        tape = _state.tape = Tape()
    return tape


def _grad_enabled() -> bool:
    return getattr(_state, "grad", True)


@contextmanager
def no_grad():
    prev = _grad_enabled()
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = prev


def set_debug(flag: bool) -> None:
    """When on, every op output is checked for NaN/Inf."""
    _state.debug = bool(flag)


def _debug() -> bool:
    return getattr(_state, "debug", False)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_g")
    __array_ufunc__ = None  # make numpy defer to our operators

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if arr.ndim > MAX_RANK:
            raise ShapeMismatch(f"tensors are at most rank {MAX_RANK}, got shape {arr.shape}")
        if _debug() and not np.all(np.isfinite(arr)):
            raise NonFiniteValue(f"non-finite value in {name or 'tensor'}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._g = None

    # ---- basics -----------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data) if self.requires_grad else None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # ---- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def _not_scalar(t):
    raise NonScalarLoss(f"item() on tensor of shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    req = _grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=req)
    if req:
        out._parents = tuple(parents)
        out._backward = backward
        get_tape().record(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0, dtype=np.float64)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True, dtype=np.float64)
    return g.astype(DTYPE, copy=False)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    The tape is cleared afterwards.
    """
    if loss.size != 1:
        raise NonScalarLoss(f"backward() needs a scalar loss, got shape {loss.shape}")
    tape = tape or get_tape()
    if not loss.requires_grad:
        tape.clear()
        return
    seed = np.ones_like(loss.data)
    if loss._backward is None:
        loss.grad = seed if loss.grad is None else loss.grad + seed
        tape.clear()
        return
    loss._g = seed
    for node in reversed(tape.nodes):
        g = node._g
        if g is None:
            continue
        grads = node._backward(g)
        for parent, pg in zip(node._parents, grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent._backward is None:
                parent.grad = pg.astype(DTYPE, copy=True) if parent.grad is None else parent.grad + pg
            else:
                parent._g = pg if parent._g is None else parent._g + pg
        node._g = None
    tape.clear()


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        return (
            _unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
        )

    return _make(ad * bd, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        return (
            _unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(-g * ad / (bd * bd), bd.shape) if b.requires_grad else None,
        )

    return _make(ad / bd, (a, b), bw)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return _make(np.log(xd), (x,), lambda g: (g / xd,))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    xd = x.data
    inside = (xd >= lo) & (xd <= hi)
    return _make(np.clip(xd, lo, hi), (x,), lambda g: (g * inside,))


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data.astype(np.float64)
    y = np.where(xd >= 0, 1.0 / (1.0 + np.exp(-np.abs(xd))), np.exp(-np.abs(xd)) / (1.0 + np.exp(-np.abs(xd))))
    y = y.astype(DTYPE)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    xd = x.data
    neg = alpha * np.expm1(np.minimum(xd, 0.0))
    y = np.where(xd > 0, xd, neg)
    return _make(y, (x,), lambda g: (g * np.where(xd > 0, 1.0, neg + alpha).astype(DTYPE),))


def relu(x: Tensor) -> Tensor:
    xd = x.data
    return _make(np.maximum(xd, 0.0), (x,), lambda g: (g * (xd > 0),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


NONLINEARITIES = {"elu": elu, "relu": relu, "tanh": tanh, "sigmoid": sigmoid}


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape
    y = x.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(DTYPE)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(DTYPE),)

    return _make(y, (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis, keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def getitem(x: Tensor, idx) -> Tensor:
    shape = x.shape
    y = x.data[idx]
    basic = _is_basic_index(idx)

    def bw(g):
        out = np.zeros(shape, dtype=DTYPE)
        if basic:
            out[idx] += g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _make(np.array(y, dtype=DTYPE), (x,), bw)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


def take_rows(x: Tensor, rows: np.ndarray) -> Tensor:
    """``x[rows]`` along axis 0 with scatter-add backward."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= x.shape[0]):
        raise IndexOutOfRange("row index out of range")
    shape = x.shape

    def bw(g):
        return (_scatter_rows(rows.reshape(-1), g.reshape((-1,) + shape[1:]), shape),)

    return _make(x.data[rows], (x,), bw)


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    y = np.stack([x.data for x in xs], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _make(y, xs, bw)


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    y = np.concatenate([x.data for x in xs], axis=axis)
    bounds = np.cumsum([0] + [x.shape[axis] for x in xs])

    def bw(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(xs))
        )

    return _make(y, xs, bw)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for ``a`` of rank 1-3 and ``b`` of rank 2 (or matching rank 3)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim not in (2, 3) or a.ndim < 1 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    if b.ndim == 3 and (a.ndim != 3 or a.shape[0] != b.shape[0]):
        raise ShapeMismatch(f"batched matmul {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = g @ np.swapaxes(bd, -1, -2)
            if a.ndim == 1:
                ga = ga.reshape(ad.shape)
        if b.requires_grad:
            if b.ndim == 3:
                gb = np.swapaxes(ad, -1, -2) @ g
            else:
                k = ad.shape[-1]
                gb = ad.reshape(-1, k).T @ g.reshape(-1, bd.shape[-1])
        return ga, gb

    return _make(ad @ bd, (a, b), bw)


# ---------------------------------------------------------------------------
# model primitives
# ---------------------------------------------------------------------------


def _scatter_rows(ids: np.ndarray, rows: np.ndarray, table_shape) -> np.ndarray:
    """Dense gradient table with ``rows[k]`` added into row ``ids[k]`` (64-bit sums)."""
    from .batched import scatter_add_rows

    rows = np.ascontiguousarray(rows, dtype=DTYPE).reshape(len(ids), -1)
    out = scatter_add_rows(np.ascontiguousarray(ids, dtype=np.int64), rows, int(table_shape[0]))
    return out.reshape(table_shape)


def embed(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; the gradient scatter-adds into the table."""
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise IndexOutOfRange("embedding ids must be integers")
    if table.ndim != 2:
        raise ShapeMismatch(f"embedding table must be rank 2, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexOutOfRange(f"id out of range for table with {table.shape[0]} rows")
    tshape = table.shape
    flat = ids.reshape(-1)

    def bw(g):
        return (_scatter_rows(flat, g.reshape(-1, tshape[1]), tshape),)

    return _make(table.data[ids], (table,), bw)


def softmax_t(x: Tensor, temperature: float = 1.0, axis: int = -1) -> Tensor:
    """Tempered softmax ``exp(x/t) / sum exp(x/t)`` with max subtraction."""
    if not temperature > 0:
        raise NonPositiveTemperature(f"temperature must be positive, got {temperature}")
    xd = x.data.astype(np.float64) / temperature
    xd = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(xd)
    y64 = e / e.sum(axis=axis, keepdims=True)
    y = y64.astype(DTYPE)

    def bw(g):
        dot = (g * y64).sum(axis=axis, keepdims=True)
        return (((g - dot) * y64 / temperature).astype(DTYPE),)

    return _make(y, (x,), bw)


def zeros(shape, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=DTYPE), requires_grad=requires_grad)
