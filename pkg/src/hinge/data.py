"""Dataset ingestion, splitting and the flat key=value configuration format."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadFractions, ConfigError, DataError, MalformedLine, MissingData, MissingFile
from .graph import HeteroGraph, load_graph, save_graph

DATA_ENV = "HINGE_DATA_DIR"

ML100K_GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime", "Documentary",
    "Drama", "Fantasy", "Film-Noir", "Horror", "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller",
    "War", "Western",
]


@dataclass
class LabeledPairs:
    """Parallel arrays of source index, target index and 0/1 label."""

    sources: np.ndarray
    targets: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.sources = np.asarray(self.sources, dtype=np.int64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)

    def __len__(self):
        return len(self.labels)

    def take(self, idx) -> "LabeledPairs":
        return LabeledPairs(self.sources[idx], self.targets[idx], self.labels[idx])

    def as_set(self) -> set:
        return set(zip(self.sources.tolist(), self.targets.tolist(), self.labels.tolist()))


@dataclass
class Dataset:
    graph: HeteroGraph
    pairs: LabeledPairs
    source_type: str
    target_type: str
    meta: dict = field(default_factory=dict)


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_ENV, "data"))


# ---------------------------------------------------------------------------
# Movielens 100K
# ---------------------------------------------------------------------------


def _read_lines(path: Path, encoding="latin-1"):
    if not path.exists():
        raise MissingFile(f"missing file: {path}")
    with open(path, encoding=encoding) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if line:
                yield lineno, line


def ingest_movielens(directory, movie_neighbors: int = 0) -> Dataset:
    """Read ``u.data``, ``u.item`` and ``u.user`` from a Movielens 100K directory.

    Every rating becomes a user-movie edge and a labelled pair (rating >= 4 is
    positive).  Occupations and genres become user-occupation and movie-genre
    edges.  With ``movie_neighbors > 0`` a symmetric movie-movie relation links
    each movie to the movies with which it shares the most raters.
    """
    d = Path(directory)
    ratings = []
    for lineno, line in _read_lines(d / "u.data"):
        parts = line.split("\t")
        if len(parts) != 4:
            raise MalformedLine(d / "u.data", lineno, f"expected 4 tab-separated fields, got {len(parts)}")
        try:
            u, m, r = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError:
            raise MalformedLine(d / "u.data", lineno, "non-integer user, item or rating") from None
        if u < 1 or m < 1 or not 1 <= r <= 5:
            raise MalformedLine(d / "u.data", lineno, "id or rating out of range")
        ratings.append((u - 1, m - 1, r))
    if not ratings:
        raise MissingData(f"{d / 'u.data'} holds no ratings")
    genres = []
    n_items = 0
    for lineno, line in _read_lines(d / "u.item"):
        parts = line.split("|")
        if len(parts) != 5 + len(ML100K_GENRES):
            raise MalformedLine(d / "u.item", lineno, f"expected {5 + len(ML100K_GENRES)} fields")
        m = int(parts[0]) - 1
        n_items = max(n_items, m + 1)
        for gi, flag in enumerate(parts[5:]):
            if flag.strip() == "1":
                genres.append((m, gi))
    occupations = {}
    user_occ = []
    n_users = 0
    for lineno, line in _read_lines(d / "u.user"):
        parts = line.split("|")
        if len(parts) != 5:
            raise MalformedLine(d / "u.user", lineno, "expected 5 |-separated fields")
        u = int(parts[0]) - 1
        n_users = max(n_users, u + 1)
        occ = occupations.setdefault(parts[3], len(occupations))
        user_occ.append((u, occ))

    g = HeteroGraph()
    U = g.add_type("user", "U")
    M = g.add_type("movie", "M")
    O = g.add_type("occupation", "O")
    G = g.add_type("genre", "G")
    g.add_relation("user-movie", U, M, "movie-user")
    g.add_relation("user-occupation", U, O, "occupation-user")
    g.add_relation("movie-genre", M, G, "genre-movie")
    g.add_relation("movie-movie", M, M, self_loops=False)
    g.ensure_nodes(U, n_users)
    g.ensure_nodes(M, n_items)
    g.ensure_nodes(O, len(occupations))
    g.ensure_nodes(G, len(ML100K_GENRES))
    arr = np.array(ratings, dtype=np.int64)
    g.add_edges("user-movie", arr[:, 0], arr[:, 1])
    uo = np.array(user_occ, dtype=np.int64)
    g.add_edges("user-occupation", uo[:, 0], uo[:, 1])
    mg = np.array(genres, dtype=np.int64)
    g.add_edges("movie-genre", mg[:, 0], mg[:, 1])
    if movie_neighbors > 0:
        a, b = co_rating_neighbors(arr[:, 0], arr[:, 1], n_users, n_items, movie_neighbors)
        g.add_edges("movie-movie", a, b)
    g.freeze()
    pairs = LabeledPairs(arr[:, 0], arr[:, 1], (arr[:, 2] >= 4).astype(np.int64))
    meta = {
        "dataset": "movielens-100k",
        "n_users": n_users,
        "n_movies": n_items,
        "n_ratings": len(ratings),
        "movie_neighbors": movie_neighbors,
    }
    return Dataset(g, pairs, "user", "movie", meta)


def co_rating_neighbors(users, items, n_users: int, n_items: int, k: int):
    """Top-``k`` movies by number of shared raters, per movie (ties by lower index).

    Uses only who rated what, never the rating values.
    """
    R = np.zeros((n_users, n_items), dtype=np.float32)
    R[users, items] = 1.0
    C = R.T @ R
    np.fill_diagonal(C, -1.0)
    src, dst = [], []
    for m in range(n_items):
        row = C[m]
        order = np.lexsort((np.arange(n_items), -row))[:k]
        order = order[row[order] > 0]
        src.extend([m] * len(order))
        dst.extend(order.tolist())
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


def split(n_or_pairs, fractions=(0.6, 0.2, 0.2), seed: int = 0):
    """Shuffle and cut into three disjoint parts; returns index arrays or pair sets."""
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise BadFractions(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    pairs = n_or_pairs if isinstance(n_or_pairs, LabeledPairs) else None
    n = len(pairs) if pairs is not None else (n_or_pairs if isinstance(n_or_pairs, int) else len(n_or_pairs))
    perm = np.random.default_rng(seed).permutation(n)
    a = int(round(fr[0] * n))
    b = a + int(round(fr[1] * n))
    parts = [np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:])]
    if pairs is not None:
        return tuple(pairs.take(p) for p in parts)
    if not isinstance(n_or_pairs, int):
        seq = list(n_or_pairs)
        return tuple([seq[i] for i in p] for p in parts)
    return tuple(parts)


# ---------------------------------------------------------------------------
# key=value configuration
# ---------------------------------------------------------------------------


def parse_config_text(text: str, source="<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"missing config: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), str(p))


def write_config(path, values: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for k, v in values.items():
            f.write(f"{k}={format_value(v)}\n")


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    return str(v)


# ---------------------------------------------------------------------------
# prepared datasets
# ---------------------------------------------------------------------------

_PAIRS_MAGIC = b"HNGP"


def save_pairs(pairs: LabeledPairs, path) -> None:
    with open(path, "wb") as f:
        f.write(_PAIRS_MAGIC)
        f.write(struct.pack("<I", len(pairs)))
        f.write(np.stack([pairs.sources, pairs.targets, pairs.labels], axis=1).astype("<u4").tobytes())


def load_pairs(path) -> LabeledPairs:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"missing file: {p}")
    data = p.read_bytes()
    if data[:4] != _PAIRS_MAGIC:
        raise DataError(f"{p}: not a pairs file")
    (n,) = struct.unpack_from("<I", data, 4)
    arr = np.frombuffer(data, dtype="<u4", offset=8).reshape(n, 3).astype(np.int64)
    return LabeledPairs(arr[:, 0], arr[:, 1], arr[:, 2])


def save_dataset(ds: Dataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_graph(ds.graph, d / "graph.hngg")
    save_pairs(ds.pairs, d / "pairs.bin")
    meta = dict(ds.meta)
    meta.update(source_type=ds.source_type, target_type=ds.target_type, checksum=ds.graph.checksum())
    write_config(d / "manifest.txt", meta)


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    meta = read_config(d / "manifest.txt")
    g = load_graph(d / "graph.hngg")
    if "checksum" in meta and meta["checksum"] != g.checksum():
        raise DataError(f"{d}: graph checksum does not match the manifest")
    return Dataset(g, load_pairs(d / "pairs.bin"), meta.pop("source_type"), meta.pop("target_type"), meta)
