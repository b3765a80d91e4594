import numpy as np
import pytest

from hinge.graph import HeteroGraph, NodeRef
from hinge.synthetic import figure_graph


@pytest.fixture
def fig_graph():
    return figure_graph()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_graph(seed, n_users=12, n_movies=15, n_dir=5, p=0.25):
    """U-M-D graph with some isolated nodes."""
    r = np.random.default_rng(seed)
    g = HeteroGraph()
    U = g.add_type("user", "U", n_users)
    M = g.add_type("movie", "M", n_movies)
    D = g.add_type("director", "D", n_dir)
    g.add_relation("user-movie", U, M, "movie-user")
    g.add_relation("movie-director", M, D, "director-movie")
    for u in range(n_users):
        for m in range(n_movies):
            if r.random() < p:
                g.add_edge("user-movie", NodeRef(U, u), NodeRef(M, m))
    for m in range(n_movies):
        for d in range(n_dir):
            if r.random() < 0.3:
                g.add_edge("movie-director", NodeRef(M, m), NodeRef(D, d))
    return g.freeze()
