"""Row-batched matrix-vector products used by the attention layers.

``rowdot(x, u)[r, m] = sum_e x[r, m, e] * u[r, e]`` and
``rowmix(x, a)[r, e] = sum_m a[r, m] * x[r, m, e]``.  Each is the other's
adjoint, so the backward passes reuse the same two kernels.
"""

import numba as nb
import numpy as np

from ..errors import ShapeMismatch
from .core import Tensor, _make, as_tensor


@nb.njit(cache=True)
def _rowdot(x, u):
    R, M, E = x.shape
    out = np.empty((R, M), np.float32)
    for r in range(R):
        for m in range(M):
            acc = 0.0
            for e in range(E):
                acc += np.float64(x[r, m, e]) * u[r, e]
            out[r, m] = acc
    return out


@nb.njit(cache=True)
def _rowmix(x, a):
    R, M, E = x.shape
    out = np.empty((R, E), np.float32)
    acc = np.empty(E, np.float64)
    for r in range(R):
        acc[:] = 0.0
        for m in range(M):
            w = np.float64(a[r, m])
            for e in range(E):
                acc[e] += w * x[r, m, e]
        for e in range(E):
            out[r, e] = acc[e]
    return out


@nb.njit(cache=True)
def _outer(a, u):
    R, M = a.shape
    E = u.shape[1]
    out = np.empty((R, M, E), np.float32)
    for r in range(R):
        for m in range(M):
            w = a[r, m]
            for e in range(E):
                out[r, m, e] = w * u[r, e]
    return out


@nb.njit(cache=True)
def _scatter_add(ids, rows, n):
    acc = np.zeros((n, rows.shape[1]), np.float64)
    for k in range(ids.shape[0]):
        i = ids[k]
        for e in range(rows.shape[1]):
            acc[i, e] += rows[k, e]
    return acc.astype(np.float32)


def scatter_add_rows(ids: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    """``out[ids[k]] += rows[k]`` into an ``(n, E)`` zero table."""
    return _scatter_add(ids, rows, n)


def _f32(a):
    return np.ascontiguousarray(a, dtype=np.float32)


def _check(x, other, axis_len):
    if x.ndim != 3 or other.ndim != 2 or other.shape[0] != x.shape[0] or other.shape[1] != axis_len:
        raise ShapeMismatch(f"row-batched product of {x.shape} with {other.shape}")


def rowdot(x, u) -> Tensor:
    x, u = as_tensor(x), as_tensor(u)
    _check(x, u, x.shape[2])
    xd, ud = _f32(x.data), _f32(u.data)

    def bw(g):
        g = _f32(g)
        return (_outer(g, ud) if x.requires_grad else None, _rowmix(xd, g) if u.requires_grad else None)

    return _make(_rowdot(xd, ud), (x, u), bw)


def rowmix(x, a) -> Tensor:
    x, a = as_tensor(x), as_tensor(a)
    _check(x, a, x.shape[1])
    xd, ad = _f32(x.data), _f32(a.data)

    def bw(g):
        g = _f32(g)
        return (_outer(ad, g) if x.requires_grad else None, _rowdot(xd, g) if a.requires_grad else None)

    return _make(_rowmix(xd, ad), (x, a), bw)
