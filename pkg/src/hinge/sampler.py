"""Metapath-guided random walks and prefix grouping.

Random numbers come from a counter-based hash (splitmix64 finaliser) keyed by
``(seed, anchor type, anchor index, metapath id, epoch)`` and the position of
the draw inside the walk.  Streams are therefore independent per anchor and
insensitive to the order in which anchors are processed, and batches of
anchors can be walked in one vectorised pass.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AnchorTypeMismatch, DataError, MissingFile, PrefixMismatch
from .graph import HeteroGraph, Metapath, NodeRef

MAX_RESTARTS = 8

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
        return x ^ (x >> np.uint64(31))


def stream_keys(seed: int, type_id: int, anchors, metapath_id: int, epoch: int) -> np.ndarray:
    """One 64-bit stream key per anchor."""
    k = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    for part in (type_id, metapath_id, epoch):
        k = _mix(k ^ np.uint64(part & 0xFFFFFFFFFFFFFFFF))
    return _mix(k ^ np.asarray(anchors, dtype=np.uint64))


def _uniform(keys: np.ndarray, counter: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        bits = _mix(keys ^ _mix(counter.astype(np.uint64)))
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


@dataclass
class PathBatch:
    """``L`` sampled paths (local node indices) from one anchor under one metapath."""

    metapath: Metapath
    anchor: NodeRef
    paths: np.ndarray
    pad_mask: np.ndarray

    @property
    def L(self) -> int:
        return self.paths.shape[0]

    def node(self, l: int, i: int) -> NodeRef:
        return NodeRef(self.metapath.type(i), int(self.paths[l, i]))

    def nodes(self) -> list[list[NodeRef]]:
        return [[self.node(l, i) for i in range(self.paths.shape[1])] for l in range(self.L)]

    def complete_paths(self) -> set[tuple[int, ...]]:
        return {tuple(int(v) for v in row) for row, m in zip(self.paths, self.pad_mask) if not m.any()}


def _walk_rows(g, starts, steps, pads, keys, counters):
    """Vectorised walks from ``starts`` along ``steps``; one RNG stream per row.

    Returns ``(paths, reached)`` where ``reached`` is the last valid position.
    """
    R, I = len(starts), len(steps) + 1
    csrs = [g.csr(r) for r in steps]
    paths = np.empty((R, I), dtype=np.int64)
    paths[:, 0] = starts
    paths[:, 1:] = pads[1:]
    reached = np.zeros(R, dtype=np.int64)
    todo = np.arange(R)
    for attempt in range(MAX_RESTARTS + 1):
        if todo.size == 0 or I == 1:
            break
        cur = paths[todo, 0].copy()
        alive = np.ones(todo.size, dtype=bool)
        depth = np.zeros(todo.size, dtype=np.int64)
        partial = np.empty((todo.size, I), dtype=np.int64)
        partial[:, 0] = cur
        partial[:, 1:] = pads[1:]
        for i in range(1, I):
            indptr, indices = csrs[i - 1]
            rows = np.flatnonzero(alive)
            lo = indptr[cur[rows]]
            deg = indptr[cur[rows] + 1] - lo
            ok = deg > 0
            counter = (counters[todo[rows]] * I + i) * (MAX_RESTARTS + 1) + attempt
            u = _uniform(keys[todo[rows]], counter)
            pick = np.minimum((u * deg).astype(np.int64), np.maximum(deg - 1, 0))
            step_rows = rows[ok]
            nxt = indices[lo[ok] + pick[ok]]
            partial[step_rows, i] = nxt
            cur[step_rows] = nxt
            depth[step_rows] = i
            alive[rows[~ok]] = False
        # keep the furthest-reaching attempt per walk
        better = depth >= reached[todo]
        upd = todo[better]
        paths[upd] = partial[better]
        reached[upd] = depth[better]
        todo = todo[depth < I - 1]
    return paths, reached


def _pads(g, metapath):
    return np.array([g.num_nodes(t) for t in metapath.types], dtype=np.int64)


def walk(
    g: HeteroGraph,
    anchors,
    metapath: Metapath,
    L: int,
    seed: int,
    epoch: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Walk ``L`` paths from every anchor index; returns ``(N, L, I)`` paths and pad mask.

    Each step moves to a neighbour drawn uniformly.  A walk that reaches a node
    with no neighbour restarts from the anchor, up to ``MAX_RESTARTS`` times;
    positions still missing after that hold the type's pad node.
    """
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1)
    N, I = len(anchors), metapath.length
    keys = np.repeat(stream_keys(seed, metapath.type(0).id, anchors, metapath.stable_id, epoch), L)
    counters = np.tile(np.arange(L, dtype=np.int64), N)
    paths, reached = _walk_rows(g, np.repeat(anchors, L), metapath.steps, _pads(g, metapath), keys, counters)
    mask = np.arange(I)[None, :] > reached[:, None]
    return paths.reshape(N, L, I), mask.reshape(N, L, I)


def sample_paths(
    g: HeteroGraph, anchor: NodeRef, metapath: Metapath, L: int, seed: int, epoch: int = 0
) -> PathBatch:
    if anchor.type != metapath.type(0):
        raise AnchorTypeMismatch(f"anchor {anchor!r} is not a {metapath.type(0).name}")
    paths, mask = walk(g, [anchor.index], metapath, L, seed, epoch)
    return PathBatch(metapath, anchor, paths[0], mask[0])


def enumerate_neighborhood(
    g: HeteroGraph, anchor: NodeRef, metapath: Metapath, cap: int = 100_000
) -> tuple[set[tuple[int, ...]], bool]:
    """Every complete path from ``anchor`` along ``metapath`` (up to ``cap``); returns (paths, overflow)."""
    if anchor.type != metapath.type(0):
        raise AnchorTypeMismatch(f"anchor {anchor!r} is not a {metapath.type(0).name}")
    frontier = [(anchor.index,)]
    for step in metapath.steps:
        indptr, indices = g.csr(step)
        nxt = []
        for p in frontier:
            v = p[-1]
            for w in indices[indptr[v]: indptr[v + 1]]:
                nxt.append(p + (int(w),))
                if len(nxt) > cap:
                    return set(nxt[:cap]), True
        frontier = nxt
    return set(frontier), False


def extend_many(
    g: HeteroGraph, anchors, low_paths: np.ndarray, low_mask: np.ndarray, metapath: Metapath, per_path: int,
    seed: int, epoch: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`sample_extensions`: ``(N, Lo, k)`` prefixes -> ``(N, Lo * per_path, I)``.

    Row ``r`` of anchor ``n`` uses stream ``(anchor n, metapath)`` with counter
    ``r``, so the result matches a per-anchor call exactly.
    """
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1)
    N, Lo, k = low_paths.shape
    I = metapath.length
    C = Lo * per_path
    paths = np.empty((N, C, I), dtype=np.int64)
    mask = np.zeros((N, C, I), dtype=bool)
    paths[:, :, :k] = np.repeat(low_paths, per_path, axis=1)
    mask[:, :, :k] = np.repeat(low_mask, per_path, axis=1)
    if I > k:
        pads = _pads(g, metapath)
        flat_p = paths.reshape(N * C, I)
        flat_m = mask.reshape(N * C, I)
        live = np.flatnonzero(~flat_m[:, k - 1])
        keys = np.repeat(stream_keys(seed, metapath.type(0).id, anchors, metapath.stable_id, epoch), C)
        counters = np.tile(np.arange(C, dtype=np.int64), N)
        sub, reached = _walk_rows(g, flat_p[live, k - 1], metapath.steps[k - 1:], pads[k - 1:], keys[live],
                                  counters[live])
        flat_p[:, k:] = pads[k:]
        flat_m[:, k:] = True
        flat_p[live, k:] = sub[:, 1:]
        flat_m[live, k:] = np.arange(1, I - k + 1)[None, :] > reached[:, None]
    return paths, mask


def sample_extensions(
    g: HeteroGraph, low: PathBatch, metapath: Metapath, per_path: int, seed: int, epoch: int = 0
) -> PathBatch:
    """Extend every low-order path ``per_path`` times along the rest of ``metapath``.

    Walking the suffix from a uniformly sampled prefix gives each extension the
    same law as a direct walk along ``metapath``.  Dead ends restart from the
    end of the prefix so the prefix itself is preserved.
    """
    if not low.metapath.is_prefix_of(metapath):
        raise PrefixMismatch(f"{low.metapath.label} is not a prefix of {metapath.label}")
    paths, mask = extend_many(g, [low.anchor.index], low.paths[None], low.pad_mask[None], metapath, per_path,
                              seed, epoch)
    return PathBatch(metapath, low.anchor, paths[0], mask[0])


# ---------------------------------------------------------------------------
# grouping
# ---------------------------------------------------------------------------


@dataclass
class PathGroup:
    key: tuple[int, ...]
    low_rows: list[int] = field(default_factory=list)
    members: list[int] = field(default_factory=list)
    sample_rate: float = 0.0


@dataclass
class PathGroupBuffer:
    """High-order paths grouped under the low-order path that is their prefix."""

    low: PathBatch
    high: PathBatch
    groups: list[PathGroup]
    dropped: int = 0

    @property
    def G(self) -> int:
        return len(self.groups)

    def rates(self) -> np.ndarray:
        return np.array([gr.sample_rate for gr in self.groups])

    def set_rates(self, rates) -> None:
        for gr, r in zip(self.groups, rates):
            gr.sample_rate = float(r)

    def subset(self, rows) -> PathBatch:
        rows = np.asarray(rows, dtype=np.int64)
        return PathBatch(self.high.metapath, self.high.anchor, self.high.paths[rows], self.high.pad_mask[rows])


def group_paths(low: PathBatch, high: PathBatch) -> PathGroupBuffer:
    """Assign each high path to the group whose low-order path equals its prefix.

    Groups are keyed by distinct low-order paths in order of first appearance;
    high paths whose prefix matches no low-order path are counted in
    ``dropped``.
    """
    if not low.metapath.is_prefix_of(high.metapath):
        raise PrefixMismatch(f"{low.metapath.label} is not a prefix of {high.metapath.label}")
    if low.anchor != high.anchor:
        raise PrefixMismatch("low and high batches have different anchors")
    k = low.metapath.length
    index: dict[tuple[int, ...], PathGroup] = {}
    groups = []
    for r, row in enumerate(low.paths):
        key = tuple(int(v) for v in row)
        if key not in index:
            index[key] = PathGroup(key)
            groups.append(index[key])
        index[key].low_rows.append(r)
    dropped = 0
    for j, row in enumerate(high.paths):
        gr = index.get(tuple(int(v) for v in row[:k]))
        if gr is None:
            dropped += 1
        else:
            gr.members.append(j)
    return PathGroupBuffer(low, high, groups, dropped)


# ---------------------------------------------------------------------------
# HNGB path buffers
# ---------------------------------------------------------------------------

_BUF_MAGIC = b"HNGB"


def save_paths(path, paths: np.ndarray) -> None:
    """Write an ``(L, I)`` or ``(N, L, I)`` index array; leading axes are flattened into L."""
    paths = np.asarray(paths)
    I = paths.shape[-1]
    flat = paths.reshape(-1, I)
    with open(path, "wb") as f:
        f.write(_BUF_MAGIC)
        f.write(struct.pack("<II", flat.shape[0], I))
        f.write(flat.astype("<u4").tobytes())


def load_paths(path) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise MissingFile(str(p))
    data = p.read_bytes()
    if data[:4] != _BUF_MAGIC:
        raise DataError(f"{p}: not an HNGB path buffer")
    L, I = struct.unpack_from("<II", data, 4)
    if len(data) != 12 + 4 * L * I:
        raise DataError(f"{p}: expected {L}x{I} entries")
    return np.frombuffer(data, dtype="<u4", offset=12).reshape(L, I).astype(np.int64)
