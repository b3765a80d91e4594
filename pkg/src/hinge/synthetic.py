"""Small generated datasets with known ground truth."""

from __future__ import annotations

import numpy as np

from .data import Dataset, LabeledPairs
from .graph import HeteroGraph, NodeRef


def figure_graph() -> HeteroGraph:
    """Two users, two movies, three directors: u_A-m_A, u_A-m_B, m_A-d_{A,B,C}, m_B-d_B."""
    g = HeteroGraph()
    U = g.add_type("user", "U")
    M = g.add_type("movie", "M")
    D = g.add_type("director", "D")
    g.add_relation("user-movie", U, M, "movie-user")
    g.add_relation("movie-director", M, D, "director-movie")
    g.ensure_nodes(U, 2)
    for m in (0, 1):
        g.add_edge("user-movie", NodeRef(U, 0), NodeRef(M, m))
    for m, d in ((0, 0), (0, 1), (0, 2), (1, 1)):
        g.add_edge("movie-director", NodeRef(M, m), NodeRef(D, d))
    return g.freeze()


def toy_dataset(seed: int = 0, n_pairs: int = 50) -> Dataset:
    """20 nodes (6 users, 10 movies, 4 genres) and 50 labelled pairs.

    Each user prefers one genre; a pair is positive when the movie carries it.
    """
    rng = np.random.default_rng(seed)
    g = HeteroGraph()
    U = g.add_type("user", "U")
    M = g.add_type("movie", "M")
    G = g.add_type("genre", "G")
    g.add_relation("user-movie", U, M, "movie-user")
    g.add_relation("movie-genre", M, G, "genre-movie")
    nu, nm, ng = 6, 10, 4
    g.ensure_nodes(U, nu)
    g.ensure_nodes(M, nm)
    g.ensure_nodes(G, ng)
    movie_genre = rng.integers(ng, size=nm)
    for m in range(nm):
        g.add_edge("movie-genre", NodeRef(M, m), NodeRef(G, int(movie_genre[m])))
    pref = rng.integers(ng, size=nu)
    for u in range(nu):
        liked = np.flatnonzero(movie_genre == pref[u])
        others = rng.choice(nm, 2, replace=False)
        for m in set(liked[:3].tolist()) | set(others.tolist()):
            g.add_edge("user-movie", NodeRef(U, u), NodeRef(M, int(m)))
    g.freeze()
    src = rng.integers(nu, size=n_pairs)
    dst = rng.integers(nm, size=n_pairs)
    lab = (movie_genre[dst] == pref[src]).astype(np.int64)
    return Dataset(g, LabeledPairs(src, dst, lab), "user", "movie", {"dataset": "toy", "seed": seed})


def _tag_graph(rng, n_users, n_items, n_tags, tags_per_node, attr_name="tag", code="T"):
    g = HeteroGraph()
    U = g.add_type("user", "U")
    I = g.add_type("item", "I")
    T = g.add_type(attr_name, code)
    g.add_relation(f"user-{attr_name}", U, T, f"{attr_name}-user")
    g.add_relation(f"item-{attr_name}", I, T, f"{attr_name}-item")
    g.ensure_nodes(U, n_users)
    g.ensure_nodes(I, n_items)
    g.ensure_nodes(T, n_tags)
    return g, U, I, T


def planted_and(seed: int = 0, n_users: int = 150, n_items: int = 150, n_tags: int = 12, n_pairs: int = 2000,
                max_tags: int = 2) -> Dataset:
    """Users and items each carry 1..``max_tags`` tags; label = they share a tag.

    Pairs are drawn half positive, half negative.  Metapath ``UTI`` (and its
    reverse ``ITU``) reaches the shared tag from both ends.
    """
    rng = np.random.default_rng(seed)
    g, U, I, T = _tag_graph(rng, n_users, n_items, n_tags, max_tags)
    utags = [set(rng.choice(n_tags, rng.integers(1, max_tags + 1), replace=False).tolist()) for _ in range(n_users)]
    itags = [set(rng.choice(n_tags, rng.integers(1, max_tags + 1), replace=False).tolist()) for _ in range(n_items)]
    for u, ts in enumerate(utags):
        for t in ts:
            g.add_edge("user-tag", NodeRef(U, u), NodeRef(T, t))
    for i, ts in enumerate(itags):
        for t in ts:
            g.add_edge("item-tag", NodeRef(I, i), NodeRef(T, t))
    g.freeze()
    share = np.array([[bool(utags[u] & itags[i]) for i in range(n_items)] for u in range(n_users)])
    pos = np.argwhere(share)
    neg = np.argwhere(~share)
    half = n_pairs // 2
    pick_p = pos[rng.choice(len(pos), half, replace=len(pos) < half)]
    pick_n = neg[rng.choice(len(neg), n_pairs - half, replace=len(neg) < n_pairs - half)]
    allp = np.concatenate([pick_p, pick_n])
    lab = np.concatenate([np.ones(half, np.int64), np.zeros(n_pairs - half, np.int64)])
    order = rng.permutation(n_pairs)
    pairs = LabeledPairs(allp[order, 0], allp[order, 1], lab[order])
    return Dataset(g, pairs, "user", "item", {"dataset": "planted-and", "seed": seed})


def ns_planted(seed: int = 0, n_users: int = 300, n_items: int = 300, n_genres: int = 4, n_noise: int = 40,
               noise_per_node: int = 3, n_pairs: int = 1200) -> Dataset:
    """One predictive attribute per node among random ones.

    Attribute nodes ``0..n_genres-1`` are genres, the rest noise.  Every user
    and item links to exactly one genre plus ``noise_per_node`` noise
    attributes; a pair is positive iff the genres agree (half the pairs).
    Users and items draw noise from disjoint pools so that no noise attribute
    is ever shared across a pair.
    ``meta["genre_of_user"]`` records the planted prefix ``(u, genre)``.
    """
    rng = np.random.default_rng(seed)
    n_attr = n_genres + n_noise
    g, U, I, A = _tag_graph(rng, n_users, n_items, n_attr, 1, attr_name="attr", code="A")
    ug = rng.integers(n_genres, size=n_users)
    ig = rng.integers(n_genres, size=n_items)
    half_noise = n_noise // 2
    for kind, genres, n, T, base in (("user-attr", ug, n_users, U, n_genres),
                                      ("item-attr", ig, n_items, I, n_genres + half_noise)):
        for v in range(n):
            g.add_edge(kind, NodeRef(T, v), NodeRef(A, int(genres[v])))
            for a in rng.choice(half_noise, noise_per_node, replace=False):
                g.add_edge(kind, NodeRef(T, v), NodeRef(A, int(base + a)))
    g.freeze()
    same = ug[:, None] == ig[None, :]
    pos, neg = np.argwhere(same), np.argwhere(~same)
    half = n_pairs // 2
    allp = np.concatenate([pos[rng.choice(len(pos), half)], neg[rng.choice(len(neg), n_pairs - half)]])
    lab = np.concatenate([np.ones(half, np.int64), np.zeros(n_pairs - half, np.int64)])
    order = rng.permutation(n_pairs)
    pairs = LabeledPairs(allp[order, 0], allp[order, 1], lab[order])
    meta = {"dataset": "ns-planted", "seed": seed, "n_genres": n_genres, "genre_of_user": ug.tolist()}
    return Dataset(g, pairs, "user", "item", meta)
