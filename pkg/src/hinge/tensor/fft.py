"""Radix-2 FFT kernels and the batched linear-convolution primitive.

All kernels work on ``(n, B)`` float64 blocks with the batch axis innermost so
the butterfly loop vectorises over ``B``.  ``conv_fft`` packs the two real
inputs of a row into one complex transform, multiplies the separated spectra
and inverts, all inside a single compiled loop.  Non power-of-two lengths in
:func:`rfft`/:func:`irfft` go through Bluestein's chirp-z reduction.
"""

from __future__ import annotations

from functools import lru_cache

import numba as nb
import numpy as np

from ..errors import ShapeMismatch
from .core import DTYPE, Tensor, _make, as_tensor


def next_pow2(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


@lru_cache(maxsize=64)
def _plan(n: int):
    """Twiddles ``exp(-2 pi i k / n)`` and the bit-reversal permutation."""
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    ang = -2.0 * np.pi * np.arange(max(n // 2, 1)) / n
    return np.cos(ang), np.sin(ang), rev


@nb.njit(cache=True, fastmath=True, inline="always")
def _fft_inplace(r, q, tw_re, tw_im, rev, sign):
    n, B = r.shape
    for k in range(n):
        j = rev[k]
        if j > k:
            for e in range(B):
                t = r[k, e]
                r[k, e] = r[j, e]
                r[j, e] = t
                t = q[k, e]
                q[k, e] = q[j, e]
                q[j, e] = t
    size = 2
    while size <= n:
        half = size // 2
        step = n // size
        for start in range(0, n, size):
            for k in range(half):
                wr = tw_re[k * step]
                wi = sign * tw_im[k * step]
                a = start + k
                b = a + half
                for e in range(B):
                    xr = r[b, e] * wr - q[b, e] * wi
                    xi = r[b, e] * wi + q[b, e] * wr
                    r[b, e] = r[a, e] - xr
                    q[b, e] = q[a, e] - xi
                    r[a, e] += xr
                    q[a, e] += xi
        size *= 2


@nb.njit(cache=True, fastmath=True)
def _cfft_kernel(r, q, tw_re, tw_im, rev, sign):
    _fft_inplace(r, q, tw_re, tw_im, rev, sign)


@nb.njit(cache=True, fastmath=True)
def _conv_kernel(hs, ht, n, lo, out_len, tw_re, tw_im, rev):
    R, Is, E = hs.shape
    It = ht.shape[1]
    out = np.empty((R, out_len, E), np.float32)
    r = np.zeros((n, E))
    q = np.zeros((n, E))
    pr = np.empty((n, E))
    pq = np.empty((n, E))
    inv = 1.0 / n
    for s in range(R):
        r[:] = 0.0
        q[:] = 0.0
        for i in range(Is):
            for e in range(E):
                r[i, e] = hs[s, i, e]
        for i in range(It):
            for e in range(E):
                q[i, e] = ht[s, i, e]
        _fft_inplace(r, q, tw_re, tw_im, rev, 1.0)
        # separate the two real spectra and multiply them
        for k in range(n):
            kc = (n - k) % n
            for e in range(E):
                ar = r[k, e]
                ai = q[k, e]
                br = r[kc, e]
                bi = q[kc, e]
                xr = 0.5 * (ar + br)
                xi = 0.5 * (ai - bi)
                yr = 0.5 * (ai + bi)
                yi = -0.5 * (ar - br)
                pr[k, e] = xr * yr - xi * yi
                pq[k, e] = xr * yi + xi * yr
        _fft_inplace(pr, pq, tw_re, tw_im, rev, -1.0)
        for m in range(out_len):
            for e in range(E):
                out[s, m, e] = pr[lo + m, e] * inv
    return out


@nb.njit(cache=True, fastmath=True)
def _conv_grad_kernel(g, hs, ht, n, tw_re, tw_im, rev):
    """Both input gradients of a row convolution in one pass.

    ``gs = corr(g, ht)`` and ``gt = corr(g, hs)`` share the transform of ``g``;
    their spectra are packed as real and imaginary parts of one inverse FFT.
    """
    R, Is, E = hs.shape
    It = ht.shape[1]
    M = g.shape[1]
    gs = np.empty((R, Is, E), np.float32)
    gt = np.empty((R, It, E), np.float32)
    r = np.zeros((n, E))
    q = np.zeros((n, E))
    gr = np.zeros((n, E))
    gi = np.zeros((n, E))
    inv = 1.0 / n
    for s in range(R):
        r[:] = 0.0
        q[:] = 0.0
        gr[:] = 0.0
        gi[:] = 0.0
        for i in range(Is):
            for e in range(E):
                r[i, e] = hs[s, i, e]
        for i in range(It):
            for e in range(E):
                q[i, e] = ht[s, i, e]
        for i in range(M):
            for e in range(E):
                gr[i, e] = g[s, i, e]
        _fft_inplace(r, q, tw_re, tw_im, rev, 1.0)
        _fft_inplace(gr, gi, tw_re, tw_im, rev, 1.0)
        # in place: row k of (r, q) becomes the packed product spectrum; rows k
        # and n-k are read together, so handle both before writing either
        for k in range(n // 2 + 1):
            kc = (n - k) % n
            for e in range(E):
                ar = r[k, e]
                ai = q[k, e]
                br = r[kc, e]
                bi = q[kc, e]
                for side in range(2):
                    if side == 0:
                        xr = 0.5 * (ar + br)
                        xi = 0.5 * (ai - bi)
                        yr = 0.5 * (ai + bi)
                        yi = -0.5 * (ar - br)
                        Gr = gr[k, e]
                        Gi = gi[k, e]
                        row = k
                    else:
                        if kc == k:
                            break
                        xr = 0.5 * (br + ar)
                        xi = 0.5 * (bi - ai)
                        yr = 0.5 * (bi + ai)
                        yi = -0.5 * (br - ar)
                        Gr = gr[kc, e]
                        Gi = gi[kc, e]
                        row = kc
                    # P1 = G conj(Y) -> grad of hs, P2 = G conj(X) -> grad of ht
                    p1r = Gr * yr + Gi * yi
                    p1i = Gi * yr - Gr * yi
                    p2r = Gr * xr + Gi * xi
                    p2i = Gi * xr - Gr * xi
                    r[row, e] = p1r - p2i
                    q[row, e] = p1i + p2r
        _fft_inplace(r, q, tw_re, tw_im, rev, -1.0)
        for i in range(Is):
            for e in range(E):
                gs[s, i, e] = r[i, e] * inv
        for i in range(It):
            for e in range(E):
                gt[s, i, e] = q[i, e] * inv
    return gs, gt


def conv_rows(hs: np.ndarray, ht: np.ndarray, lo: int = 0, out_len: int | None = None) -> np.ndarray:
    """Row-wise linear convolution along axis 1 of two ``(R, I, E)`` arrays.

    Returns entries ``[lo, lo + out_len)`` of the full length ``Is + It - 1``
    result.
    """
    hs = np.ascontiguousarray(hs, dtype=np.float32)
    ht = np.ascontiguousarray(ht, dtype=np.float32)
    if hs.ndim != 3 or ht.ndim != 3 or hs.shape[0] != ht.shape[0] or hs.shape[2] != ht.shape[2]:
        raise ShapeMismatch(f"conv_rows needs matching (R, I, E) inputs, got {hs.shape}, {ht.shape}")
    M = hs.shape[1] + ht.shape[1] - 1
    if out_len is None:
        out_len = M - lo
    n = next_pow2(M)
    tw_re, tw_im, rev = _plan(n)
    return _conv_kernel(hs, ht, n, lo, out_len, tw_re, tw_im, rev)


def conv_fft(hs, ht) -> Tensor:
    """Differentiable ``out[r, m] = sum_{a+b=m} hs[r, a] * ht[r, b]``.

    Gradients are correlations with the partner input, evaluated by a fused
    FFT kernel rather than by recording the butterflies.
    """
    hs, ht = as_tensor(hs), as_tensor(ht)
    Is, It = hs.shape[1], ht.shape[1]
    hd = np.ascontiguousarray(hs.data, dtype=np.float32)
    td = np.ascontiguousarray(ht.data, dtype=np.float32)
    out = conv_rows(hd, td)

    def bw(g):
        n = next_pow2(Is + It - 1)
        tw_re, tw_im, rev = _plan(n)
        return _conv_grad_kernel(np.ascontiguousarray(g, dtype=np.float32), hd, td, n, tw_re, tw_im, rev)

    return _make(out, (hs, ht), bw)


# ---------------------------------------------------------------------------
# general complex / real transforms
# ---------------------------------------------------------------------------


def _cfft(re: np.ndarray, im: np.ndarray, sign: float = 1.0):
    """Unnormalised DFT along axis 0 of ``(n, B)`` blocks, any ``n``.

    ``sign=1`` is the forward transform ``sum x_j exp(-2 pi i jk/n)``.
    """
    n = re.shape[0]
    if n & (n - 1) == 0:
        r = np.array(re, dtype=np.float64, order="C")
        q = np.array(im, dtype=np.float64, order="C")
        tw_re, tw_im, rev = _plan(n)
        _cfft_kernel(r, q, tw_re, tw_im, rev, sign)
        return r, q
    # Bluestein: X_k = w_k * sum_j (x_j w_j) conj(w_{k-j}), w_k = exp(-i pi sign k^2 / n)
    k = np.arange(n)
    ang = -sign * np.pi * ((k * k) % (2 * n)) / n
    wr, wi = np.cos(ang)[:, None], np.sin(ang)[:, None]
    m = next_pow2(2 * n - 1)
    ar = np.zeros((m, re.shape[1]))
    ai = np.zeros((m, re.shape[1]))
    ar[:n] = re * wr - im * wi
    ai[:n] = re * wi + im * wr
    br = np.zeros((m, 1))
    bi = np.zeros((m, 1))
    br[:n], bi[:n] = wr, -wi
    br[m - n + 1:], bi[m - n + 1:] = wr[1:][::-1], -wi[1:][::-1]
    ar, ai = _cfft(ar, ai, 1.0)
    br, bi = _cfft(br, bi, 1.0)
    pr = ar * br - ai * bi
    pi = ar * bi + ai * br
    pr, pi = _cfft(pr, pi, -1.0)
    pr, pi = pr[:n] / m, pi[:n] / m
    return pr * wr - pi * wi, pr * wi + pi * wr


def _to_block(x: np.ndarray, axis: int):
    moved = np.moveaxis(x, axis, 0)
    return moved.reshape(moved.shape[0], -1).astype(np.float64), moved.shape


def _from_block(b: np.ndarray, shape, axis: int) -> np.ndarray:
    return np.moveaxis(b.reshape((b.shape[0],) + tuple(shape[1:])), 0, axis).astype(DTYPE)


def _rfft_np(x: np.ndarray, axis: int):
    block, shape = _to_block(x, axis)
    n = block.shape[0]
    re, im = _cfft(block, np.zeros_like(block), 1.0)
    h = n // 2 + 1
    return re[:h], im[:h], shape


def _hermitian_weights(n: int) -> np.ndarray:
    h = n // 2 + 1
    c = np.full(h, 2.0)
    c[0] = 1.0
    if n % 2 == 0:
        c[-1] = 1.0
    return c[:, None]


def _irfft_np(re_block: np.ndarray, im_block: np.ndarray, n: int) -> np.ndarray:
    h = n // 2 + 1
    full_re = np.zeros((n, re_block.shape[1]))
    full_im = np.zeros((n, re_block.shape[1]))
    full_re[:h], full_im[:h] = re_block, im_block
    full_im[0] = 0.0
    if n % 2 == 0:
        full_im[h - 1] = 0.0
    tail = np.arange(h, n)
    full_re[tail] = full_re[n - tail]
    full_im[tail] = -full_im[n - tail]
    out, _ = _cfft(full_re, full_im, -1.0)
    return out / n


def rfft(x, axis: int = -1) -> tuple[Tensor, Tensor]:
    """Real-input DFT: returns ``(re, im)`` with ``n // 2 + 1`` bins on ``axis``."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] < 1:
        raise ShapeMismatch("rfft needs a non-empty axis")
    axis = axis % x.ndim
    n = x.shape[axis]
    h = n // 2 + 1
    re, im, shape = _rfft_np(x.data, axis)
    stacked = _from_block(np.concatenate([re, im]), (2 * h,) + tuple(shape[1:]), axis)

    def bw(g):
        gb, _ = _to_block(g, axis)
        full_re = np.zeros((n, gb.shape[1]))
        full_im = np.zeros((n, gb.shape[1]))
        full_re[:h], full_im[:h] = gb[:h], gb[h:]
        out, _ = _cfft(full_re, full_im, -1.0)
        return (_from_block(out, shape, axis),)

    y = _make(stacked, (x,), bw)
    lo = [slice(None)] * x.ndim
    hi = [slice(None)] * x.ndim
    lo[axis], hi[axis] = slice(0, h), slice(h, 2 * h)
    return y[tuple(lo)], y[tuple(hi)]


def irfft(re, im, n: int, axis: int = -1) -> Tensor:
    """Inverse of :func:`rfft` producing ``n`` real samples on ``axis``."""
    re, im = as_tensor(re), as_tensor(im)
    axis = axis % re.ndim
    h = n // 2 + 1
    if re.shape != im.shape or re.shape[axis] != h or n < 1:
        raise ShapeMismatch(f"irfft expects {h} bins on axis {axis}, got {re.shape} / {im.shape}")
    rb, shape = _to_block(re.data, axis)
    ib, _ = _to_block(im.data, axis)
    out = _from_block(_irfft_np(rb, ib, n), (n,) + tuple(shape[1:]), axis)
    c = _hermitian_weights(n)

    def bw(g):
        gb, gshape = _to_block(g, axis)
        gr, gi = _cfft(gb, np.zeros_like(gb), 1.0)
        gr, gi = gr[:h] * c / n, gi[:h] * c / n
        return _from_block(gr, shape, axis), _from_block(gi, shape, axis)

    return _make(out, (re, im), bw)
