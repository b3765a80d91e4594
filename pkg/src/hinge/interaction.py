"""Neighbourhood embedding matrices and their convolutional interaction."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .graph import HeteroGraph, Metapath, NodeRef
from .sampler import PathBatch
from .tensor import Tensor, concat, conv_fft, embed, mul, no_grad, stack, take_rows, zeros

ALIGNED = "aligned"
ALL_PAIRS = "all_pairs"


@dataclass
class NeighborhoodTensor:
    values: Tensor  # (L, I, E), or (R, I, E) when several anchors are batched
    metapath: Metapath | None = None
    anchor: NodeRef | None = None


@dataclass
class MetapathCombination:
    source: Metapath
    target: Metapath
    k: int


def embed_paths(paths: np.ndarray, metapath: Metapath, tables: dict) -> Tensor:
    """``(R, I)`` local indices -> ``(R, I, E)``, one table per position type."""
    paths = np.asarray(paths)
    cols = [embed(tables[metapath.type(i).name], paths[:, i]) for i in range(paths.shape[1])]
    return stack(cols, axis=1)


def build_embedding_matrix(batch: PathBatch, tables: dict) -> NeighborhoodTensor:
    return NeighborhoodTensor(embed_paths(batch.paths, batch.metapath, tables), batch.metapath, batch.anchor)


def _values(h):
    return h.values if isinstance(h, NeighborhoodTensor) else h


def _pair_rows(hs: Tensor, ht: Tensor, mode: str, groups: int = 1):
    """Line up rows of ``hs`` and ``ht`` for the chosen pairing mode.

    With ``groups > 1`` the leading axis holds ``groups`` consecutive blocks
    (one per example) and all-pairs expansion happens inside each block.
    """
    if hs.ndim != 3 or ht.ndim != 3 or hs.shape[2] != ht.shape[2]:
        raise ShapeMismatch(f"interaction needs (L, I, E) inputs with equal E, got {hs.shape}, {ht.shape}")
    if mode == ALIGNED:
        if hs.shape[0] != ht.shape[0]:
            raise ShapeMismatch(f"aligned mode needs L_s == L_t, got {hs.shape[0]} and {ht.shape[0]}")
        return hs, ht
    if mode != ALL_PAIRS:
        raise ValueError(f"unknown interaction mode {mode!r}")
    if hs.shape[0] % groups or ht.shape[0] % groups:
        raise ShapeMismatch("row count is not a multiple of the group count")
    ls, lt = hs.shape[0] // groups, ht.shape[0] // groups
    base = np.arange(groups)[:, None, None]
    si = (base * ls + np.arange(ls)[None, :, None] + 0 * np.arange(lt)[None, None, :]).reshape(-1)
    ti = (base * lt + 0 * np.arange(ls)[None, :, None] + np.arange(lt)[None, None, :]).reshape(-1)
    return take_rows(hs, si), take_rows(ht, ti)


def interact_naive(hs, ht, mode: str = ALIGNED, groups: int = 1) -> Tensor:
    """Direct evaluation of ``out[r, m] = sum_{a+b=m} hs[r, a] * ht[r, b]``.

    Built from shifted elementwise products so it differentiates through the
    ordinary tape; costs O(Is * It) per row.
    """
    hs, ht = _pair_rows(_values(hs), _values(ht), mode, groups)
    R, Is, E = hs.shape
    It = ht.shape[1]
    M = Is + It - 1
    terms = []
    for a in range(Is):
        prod = mul(hs[:, a: a + 1, :], ht)
        parts = [prod]
        if a:
            parts.insert(0, zeros((R, a, E)))
        if M - a - It:
            parts.append(zeros((R, M - a - It, E)))
        terms.append(concat(parts, axis=1) if len(parts) > 1 else prod)
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def interact_fft(hs, ht, mode: str = ALIGNED, groups: int = 1) -> Tensor:
    """Same contract as :func:`interact_naive`, evaluated in the Fourier domain."""
    hs, ht = _pair_rows(_values(hs), _values(ht), mode, groups)
    return conv_fft(hs, ht)


def interact(hs, ht, mode: str = ALIGNED, method: str = "fft", groups: int = 1) -> Tensor:
    fn = interact_fft if method == "fft" else interact_naive
    return fn(hs, ht, mode, groups)


def enumerate_combinations(
    g: HeteroGraph, source_paths: list[Metapath], target_paths: list[Metapath] | None = None, cross: bool = False
) -> list[MetapathCombination]:
    """NI pairs each source metapath with its reverse; CNI takes the full product."""
    if not source_paths:
        raise ValueError("need at least one source metapath")
    if not cross:
        return [MetapathCombination(p, g.reverse(p), k) for k, p in enumerate(source_paths)]
    targets = target_paths if target_paths else [g.reverse(p) for p in source_paths]
    combos = []
    for p in source_paths:
        for q in targets:
            combos.append(MetapathCombination(p, q, len(combos)))
    return combos


# ---------------------------------------------------------------------------
# timing study
# ---------------------------------------------------------------------------


def _best_time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter_ns()
        fn()
        best = min(best, time.perf_counter_ns() - t0)
    return best


def benchmark(I_values, L: int = 256, E: int = 64, repeat: int = 3, seed: int = 0, out_path=None):
    """Forward wall-clock of naive vs FFT interaction; rows ``I,L,E,naive_ns,fft_ns,speedup``."""
    rng = np.random.default_rng(seed)
    rows = []
    for I in I_values:
        hs = Tensor(rng.standard_normal((L, I, E)))
        ht = Tensor(rng.standard_normal((L, I, E)))
        with no_grad():
            interact_fft(hs, ht)
            naive_ns = _best_time(lambda: interact_naive(hs, ht), repeat)
            fft_ns = _best_time(lambda: interact_fft(hs, ht), repeat)
        rows.append((I, L, E, int(naive_ns), int(fft_ns), naive_ns / fft_ns))
    if out_path is not None:
        write_benchmark(rows, out_path)
    return rows


def write_benchmark(rows, out):
    close = False
    if not hasattr(out, "write"):
        out = open(out, "w", newline="")
        close = True
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["I", "L", "E", "naive_ns", "fft_ns", "speedup"])
    for I, L, E, n_ns, f_ns, sp in rows:
        w.writerow([I, L, E, n_ns, f_ns, f"{sp:.3f}"])
    if close:
        out.close()
