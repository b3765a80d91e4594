"""Typed multigraph store, network schema and metapaths.

Nodes are identity-only: a node is a ``(type, local index)`` pair and carries
no attributes.  Edges are undirected at the storage level: adding ``a -- b``
under a relation also records ``b -- a`` under its inverse.  After
:meth:`HeteroGraph.freeze` every adjacency list is a sorted, duplicate-free
CSR slice and the graph can be read concurrently.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    DataError,
    GraphFrozen,
    GraphNotFrozen,
    MalformedLine,
    MissingFile,
    SchemaError,
    SelfLoopRejected,
    TypeMismatch,
)

__all__ = [
    "TypeId",
    "NodeRef",
    "Relation",
    "Metapath",
    "HeteroGraph",
    "Interner",
    "validate_metapath",
    "load_edge_list",
    "save_graph",
    "load_graph",
]


@dataclass(frozen=True)
class TypeId:
    id: int
    name: str
    code: str

    def __repr__(self):
        return f"TypeId({self.name})"


@dataclass(frozen=True)
class NodeRef:
    type: TypeId
    index: int

    def __repr__(self):
        return f"{self.type.code}{self.index}"


@dataclass(frozen=True)
class Relation:
    id: int
    name: str
    src_type: TypeId
    dst_type: TypeId
    inverse_id: int
    self_loops: bool = False

    @property
    def symmetric(self) -> bool:
        return self.inverse_id == self.id

    def __repr__(self):
        return f"Relation({self.name}: {self.src_type.code}->{self.dst_type.code})"


@dataclass(frozen=True)
class Metapath:
    """A relation sequence; ``len(types) == len(steps) + 1``."""

    steps: tuple[Relation, ...]
    label: str = ""

    def __post_init__(self):
        if len(self.steps) < 1:
            raise SchemaError("a metapath needs at least one step (I >= 2)")
        if not self.label:
            object.__setattr__(self, "label", "".join(t.code for t in self.types))

    @property
    def types(self) -> tuple[TypeId, ...]:
        return (self.steps[0].src_type,) + tuple(r.dst_type for r in self.steps)

    @property
    def length(self) -> int:
        return len(self.steps) + 1

    def type(self, i: int) -> TypeId:
        return self.types[i]

    def prefix(self, length: int) -> "Metapath":
        """The metapath made of the first ``length - 1`` steps."""
        if not 2 <= length <= self.length:
            raise SchemaError(f"prefix length {length} out of range for {self.label}")
        return Metapath(self.steps[: length - 1])

    def is_prefix_of(self, other: "Metapath") -> bool:
        return len(self.steps) <= len(other.steps) and other.steps[: len(self.steps)] == self.steps

    @property
    def stable_id(self) -> int:
        """Run-independent integer id used to key RNG streams."""
        digest = hashlib.blake2b(
            ",".join(r.name for r in self.steps).encode(), digest_size=4
        ).digest()
        return int.from_bytes(digest, "little")

    def __repr__(self):
        return f"Metapath({self.label})"


def validate_metapath(schema: "HeteroGraph", metapath: Metapath) -> bool:
    """True iff every relation belongs to ``schema`` and consecutive steps chain."""
    try:
        rels = schema.relations
        for r in metapath.steps:
            if r.id >= len(rels) or rels[r.id] != r:
                return False
        return all(a.dst_type == b.src_type for a, b in zip(metapath.steps, metapath.steps[1:]))
    except Exception:
        return False


class HeteroGraph:
    """Mutable during construction, immutable after :meth:`freeze`."""

    def __init__(self):
        self.types: list[TypeId] = []
        self.relations: list[Relation] = []
        self.node_counts: list[int] = []
        self._frozen = False
        self._pending: list[dict[int, set[int]]] = []
        self._indptr: list[np.ndarray] = []
        self._indices: list[np.ndarray] = []

    # ---- schema -----------------------------------------------------------
    def add_type(self, name: str, code: str | None = None, count: int = 0) -> TypeId:
        self._check_mutable()
        code = code or name[:1].upper()
        if any(t.name == name for t in self.types):
            raise SchemaError(f"duplicate type name {name!r}")
        if any(t.code == code for t in self.types):
            raise SchemaError(f"duplicate type code {code!r} (for {name!r})")
        t = TypeId(len(self.types), name, code)
        self.types.append(t)
        self.node_counts.append(int(count))
        return t

    def add_relation(
        self,
        name: str,
        src: TypeId | str,
        dst: TypeId | str,
        inverse_name: str | None = None,
        self_loops: bool = False,
    ) -> Relation:
        """Declare a relation together with its inverse.

        A relation between a type and itself is its own inverse (undirected).
        """
        self._check_mutable()
        src, dst = self.type(src), self.type(dst)
        names = {r.name for r in self.relations}
        if name in names:
            raise SchemaError(f"duplicate relation {name!r}")
        rid = len(self.relations)
        if src == dst:
            if inverse_name not in (None, name):
                raise SchemaError("same-type relations are undirected; no separate inverse")
            rel = Relation(rid, name, src, dst, rid, self_loops)
            self.relations.append(rel)
            self._pending.append({})
            return rel
        if self_loops:
            raise SchemaError("self-loops only make sense on same-type relations")
        inverse_name = inverse_name or f"{dst.name}-{src.name}"
        if inverse_name in names or inverse_name == name:
            raise SchemaError(f"duplicate relation {inverse_name!r}")
        rel = Relation(rid, name, src, dst, rid + 1)
        inv = Relation(rid + 1, inverse_name, dst, src, rid)
        self.relations.extend([rel, inv])
        self._pending.extend([{}, {}])
        return rel

    def type(self, key: TypeId | str | int) -> TypeId:
        if isinstance(key, TypeId):
            if key.id < len(self.types) and self.types[key.id] == key:
                return key
            raise SchemaError(f"{key!r} is not part of this schema")
        if isinstance(key, (int, np.integer)):
            return self.types[int(key)]
        for t in self.types:
            if t.name == key or t.code == key:
                return t
        raise SchemaError(f"unknown type {key!r}")

    def relation(self, key: Relation | str | int) -> Relation:
        if isinstance(key, Relation):
            return key
        if isinstance(key, (int, np.integer)):
            return self.relations[int(key)]
        for r in self.relations:
            if r.name == key:
                return r
        raise SchemaError(f"unknown relation {key!r}")

    def inverse(self, rel: Relation) -> Relation:
        return self.relations[rel.inverse_id]

    def relations_between(self, src: TypeId, dst: TypeId) -> list[Relation]:
        return [r for r in self.relations if r.src_type == src and r.dst_type == dst]

    def metapath(self, label: str) -> Metapath:
        """Resolve a type-code label such as ``"UMUM"`` against the schema."""
        if len(label) < 2:
            raise SchemaError(f"metapath {label!r} needs at least two types")
        types = [self.type(c) for c in label]
        steps = []
        for a, b in zip(types, types[1:]):
            cands = self.relations_between(a, b)
            if len(cands) != 1:
                what = "no" if not cands else "ambiguous"
                raise SchemaError(f"{what} relation {a.code}->{b.code} in metapath {label!r}")
            steps.append(cands[0])
        return Metapath(tuple(steps), label)

    def reverse(self, metapath: Metapath) -> Metapath:
        return Metapath(tuple(self.inverse(r) for r in reversed(metapath.steps)))

    def node(self, type_: TypeId | str, index: int) -> NodeRef:
        t = self.type(type_)
        if not 0 <= index < self.node_counts[t.id]:
            raise IndexError(f"{t.name} index {index} out of range")
        return NodeRef(t, int(index))

    def num_nodes(self, type_: TypeId | str) -> int:
        return self.node_counts[self.type(type_).id]

    def ensure_nodes(self, type_: TypeId | str, count: int) -> None:
        self._check_mutable()
        t = self.type(type_)
        self.node_counts[t.id] = max(self.node_counts[t.id], int(count))

    # ---- construction -----------------------------------------------------
    @property
    def frozen(self) -> bool:
        return self._frozen

    def _check_mutable(self):
        if self._frozen:
            raise GraphFrozen("graph is frozen")

    def add_edge(self, rel: Relation | str, a: NodeRef, b: NodeRef) -> None:
        self._check_mutable()
        rel = self.relation(rel)
        if a.type != rel.src_type or b.type != rel.dst_type:
            raise TypeMismatch(
                f"{rel.name} expects {rel.src_type.code}->{rel.dst_type.code}, "
                f"got {a.type.code}->{b.type.code}"
            )
        if a == b and not rel.self_loops:
            raise SelfLoopRejected(f"self-loop on {a!r} under {rel.name}")
        self.ensure_nodes(a.type, a.index + 1)
        self.ensure_nodes(b.type, b.index + 1)
        self._pending[rel.id].setdefault(a.index, set()).add(b.index)
        self._pending[rel.inverse_id].setdefault(b.index, set()).add(a.index)

    def add_edges(self, rel: Relation | str, src: Iterable[int], dst: Iterable[int]) -> None:
        """Bulk insertion by local indices."""
        rel = self.relation(rel)
        for i, j in zip(src, dst):
            self.add_edge(rel, NodeRef(rel.src_type, int(i)), NodeRef(rel.dst_type, int(j)))

    def freeze(self) -> "HeteroGraph":
        if self._frozen:
            return self
        self._indptr, self._indices = [], []
        for rel, pending in zip(self.relations, self._pending):
            n = self.node_counts[rel.src_type.id]
            deg = np.zeros(n + 1, dtype=np.int64)
            for i, nbrs in pending.items():
                deg[i + 1] = len(nbrs)
            indptr = np.cumsum(deg)
            indices = np.empty(int(indptr[-1]), dtype=np.int64)
            for i, nbrs in pending.items():
                indices[indptr[i]: indptr[i + 1]] = sorted(nbrs)
            self._indptr.append(indptr)
            self._indices.append(indices)
        self._pending = []
        self._frozen = True
        return self

    # ---- reads ------------------------------------------------------------
    def _check_frozen(self):
        if not self._frozen:
            raise GraphNotFrozen("freeze() the graph before reading adjacency")

    def csr(self, rel: Relation | str) -> tuple[np.ndarray, np.ndarray]:
        self._check_frozen()
        rel = self.relation(rel)
        return self._indptr[rel.id], self._indices[rel.id]

    def neighbor_indices(self, n: NodeRef, rel: Relation | str) -> np.ndarray:
        rel = self.relation(rel)
        if n.type != rel.src_type:
            raise TypeMismatch(f"{n!r} is not a {rel.src_type.name} ({rel.name})")
        indptr, indices = self.csr(rel)
        return indices[indptr[n.index]: indptr[n.index + 1]]

    def neighbors(self, n: NodeRef, rel: Relation | str) -> list[NodeRef]:
        rel = self.relation(rel)
        return [NodeRef(rel.dst_type, int(j)) for j in self.neighbor_indices(n, rel)]

    def degree(self, n: NodeRef, rel: Relation | str) -> int:
        return len(self.neighbor_indices(n, rel))

    def edge_count(self, rel: Relation | str) -> int:
        """Number of distinct edges; a same-type relation counts each pair once."""
        rel = self.relation(rel)
        _, indices = self.csr(rel)
        if not rel.symmetric:
            return len(indices)
        indptr, _ = self.csr(rel)
        loops = sum(
            int(np.any(indices[indptr[i]: indptr[i + 1]] == i))
            for i in range(self.node_counts[rel.src_type.id])
        )
        return (len(indices) - loops) // 2 + loops

    def nodes(self, type_: TypeId | str) -> Iterator[NodeRef]:
        t = self.type(type_)
        for i in range(self.node_counts[t.id]):
            yield NodeRef(t, i)

    def checksum(self) -> str:
        """Content hash over schema and adjacency (used for round-trip checks)."""
        self._check_frozen()
        h = hashlib.sha256()
        for t, c in zip(self.types, self.node_counts):
            h.update(f"{t.name}/{t.code}/{c};".encode())
        for r in self.relations:
            h.update(f"{r.name}/{r.src_type.id}/{r.dst_type.id}/{r.inverse_id};".encode())
            h.update(self._indptr[r.id].astype("<u4").tobytes())
            h.update(self._indices[r.id].astype("<u4").tobytes())
        return h.hexdigest()

    def __repr__(self):
        counts = ", ".join(f"{t.name}={c}" for t, c in zip(self.types, self.node_counts))
        return f"HeteroGraph({counts}; {len(self.relations)} relations)"


# ---------------------------------------------------------------------------
# Edge-list ingestion
# ---------------------------------------------------------------------------


class Interner:
    """Maps raw string ids to dense per-type indices in first-seen order."""

    def __init__(self):
        self.tables: dict[str, dict[str, int]] = {}

    def intern(self, type_name: str, raw: str) -> int:
        table = self.tables.setdefault(type_name, {})
        idx = table.get(raw)
        if idx is None:
            idx = table[raw] = len(table)
        return idx

    def lookup(self, type_name: str, raw: str) -> int:
        return self.tables[type_name][raw]

    def raw_ids(self, type_name: str) -> list[str]:
        table = self.tables.get(type_name, {})
        out = [""] * len(table)
        for raw, idx in table.items():
            out[idx] = raw
        return out

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for type_name in sorted(self.tables):
                for idx, raw in enumerate(self.raw_ids(type_name)):
                    f.write(f"{type_name}\t{raw}\t{idx}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Interner":
        out = cls()
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise MalformedLine(path, lineno, "expected type<TAB>raw<TAB>index")
                out.tables.setdefault(parts[0], {})[parts[1]] = int(parts[2])
        return out


def load_edge_list(
    path: str | Path,
    graph: HeteroGraph | None = None,
    interner: Interner | None = None,
    freeze: bool = True,
) -> tuple[HeteroGraph, Interner]:
    """Read ``src_type, src_id, relation, dst_type, dst_id`` TSV lines.

    Types and relations missing from ``graph`` are declared on first use.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    graph = graph if graph is not None else HeteroGraph()
    interner = interner if interner is not None else Interner()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise MalformedLine(path, lineno, f"expected 5 tab-separated fields, got {len(parts)}")
            st, si, rname, dt, di = parts
            try:
                for tname in (st, dt):
                    if not any(t.name == tname for t in graph.types):
                        graph.add_type(tname, _free_code(graph, tname))
                if not any(r.name == rname for r in graph.relations):
                    graph.add_relation(rname, st, dt)
                rel = graph.relation(rname)
                a = NodeRef(graph.type(st), interner.intern(st, si))
                b = NodeRef(graph.type(dt), interner.intern(dt, di))
                graph.add_edge(rel, a, b)
            except (SchemaError, TypeMismatch, SelfLoopRejected) as exc:
                raise MalformedLine(path, lineno, str(exc)) from exc
    if freeze:
        graph.freeze()
    return graph, interner


def _free_code(graph: HeteroGraph, name: str) -> str:
    used = {t.code for t in graph.types}
    for c in [name[:1].upper(), *name.upper(), *"ABCDEFGHIJKLMNOPQRSTUVWXYZ"]:
        if c.isalpha() and c not in used:
            return c
    raise SchemaError("ran out of single-letter type codes")


# ---------------------------------------------------------------------------
# Binary persistence (magic HNGG)
# ---------------------------------------------------------------------------

_GRAPH_MAGIC = b"HNGG"
_GRAPH_VERSION = 1


def _write_str(f, s: str):
    b = s.encode("utf-8")
    f.write(struct.pack("<I", len(b)))
    f.write(b)


def _read_exact(f, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise DataError("truncated graph file")
    return b


def _read_u32(f) -> int:
    return struct.unpack("<I", _read_exact(f, 4))[0]


def _read_str(f) -> str:
    return _read_exact(f, _read_u32(f)).decode("utf-8")


def save_graph(graph: HeteroGraph, path: str | Path) -> None:
    """Schema block, then per-relation CSR arrays, all little-endian u32."""
    graph._check_frozen()
    with open(path, "wb") as f:
        f.write(_GRAPH_MAGIC)
        f.write(struct.pack("<II", _GRAPH_VERSION, len(graph.types)))
        for t, c in zip(graph.types, graph.node_counts):
            _write_str(f, t.name)
            _write_str(f, t.code)
            f.write(struct.pack("<I", c))
        f.write(struct.pack("<I", len(graph.relations)))
        for r in graph.relations:
            _write_str(f, r.name)
            f.write(struct.pack("<IIII", r.src_type.id, r.dst_type.id, r.inverse_id, int(r.self_loops)))
        for r in graph.relations:
            indptr, indices = graph.csr(r)
            f.write(struct.pack("<I", len(indices)))
            f.write(indptr.astype("<u4").tobytes())
            f.write(indices.astype("<u4").tobytes())


def load_graph(path: str | Path) -> HeteroGraph:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    with open(path, "rb") as f:
        if f.read(4) != _GRAPH_MAGIC:
            raise DataError(f"{path}: not an HNGG graph file")
        version, ntypes = struct.unpack("<II", _read_exact(f, 8))
        if version != _GRAPH_VERSION:
            raise DataError(f"{path}: unsupported graph version {version}")
        g = HeteroGraph()
        for _ in range(ntypes):
            name, code = _read_str(f), _read_str(f)
            g.add_type(name, code, _read_u32(f))
        nrel = _read_u32(f)
        rels = []
        for i in range(nrel):
            name = _read_str(f)
            src, dst, inv, loops = struct.unpack("<IIII", _read_exact(f, 16))
            rels.append(Relation(i, name, g.types[src], g.types[dst], inv, bool(loops)))
        g.relations = rels
        for r in rels:
            nnz = _read_u32(f)
            n = g.node_counts[r.src_type.id]
            indptr = np.frombuffer(_read_exact(f, 4 * (n + 1)), dtype="<u4").astype(np.int64)
            indices = np.frombuffer(_read_exact(f, 4 * nnz), dtype="<u4").astype(np.int64)
            g._indptr.append(indptr)
            g._indices.append(indices)
        g._pending = []
        g._frozen = True
    return g

