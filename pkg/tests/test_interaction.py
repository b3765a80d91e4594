import numpy as np
import pytest

from hinge.errors import ShapeMismatch
from hinge.graph import HeteroGraph, NodeRef
from hinge.interaction import ALIGNED, ALL_PAIRS, build_embedding_matrix, enumerate_combinations, interact_fft, \
    interact_naive
from hinge.sampler import PathBatch
from hinge.tensor import Tensor, backward, embed, sum_


def conv_oracle(hs, ht):
    """Double loop over positions, per row and channel."""
    R, Is, E = hs.shape
    It = ht.shape[1]
    out = np.zeros((R, Is + It - 1, E))
    for r in range(R):
        for a in range(Is):
            for b in range(It):
                out[r, a + b] += hs[r, a] * ht[r, b]
    return out


def _two_type():
    g = HeteroGraph()
    U, M = g.add_type("user", "U"), g.add_type("movie", "M")
    g.add_relation("user-movie", U, M)
    g.add_edge("user-movie", NodeRef(U, 0), NodeRef(M, 0))
    return g.freeze(), U, M


def test_embedding_matrix_values():
    g, U, M = _two_type()
    tables = {"user": Tensor([[3.0], [0.0]], requires_grad=True), "movie": Tensor([[5.0], [0.0]], requires_grad=True)}
    batch = PathBatch(g.metapath("UM"), NodeRef(U, 0), np.array([[0, 0]]), np.zeros((1, 2), bool))
    nt = build_embedding_matrix(batch, tables)
    assert nt.values.data.tolist() == [[[3.0], [5.0]]]


def test_embedding_matrix_duplicates_and_grad_count():
    g, U, M = _two_type()
    rng = np.random.default_rng(0)
    tables = {"user": Tensor(rng.normal(size=(2, 4)), True), "movie": Tensor(rng.normal(size=(2, 4)), True)}
    paths = np.array([[0, 0], [0, 0], [0, 1]])
    nt = build_embedding_matrix(PathBatch(g.metapath("UM"), NodeRef(U, 0), paths, np.zeros((3, 2), bool)), tables)
    assert np.array_equal(nt.values.data[0], nt.values.data[1])
    backward(sum_(nt.values))
    np.testing.assert_array_equal(tables["user"].grad[0], 3.0)
    np.testing.assert_array_equal(tables["movie"].grad[:, 0], [2.0, 1.0])


def test_zero_hop_is_elementwise_and():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(2, 1, 5)), rng.normal(size=(2, 1, 5))
    np.testing.assert_allclose(interact_naive(Tensor(a), Tensor(b)).data, a * b, rtol=1e-6)


def test_worked_sequence():
    hs = Tensor(np.array([1.0, 2, 3]).reshape(1, 3, 1))
    ht = Tensor(np.array([4.0, 5, 6]).reshape(1, 3, 1))
    expect = conv_oracle(hs.data, ht.data).ravel()
    assert expect.tolist() == [4, 13, 28, 27, 18]
    for fn in (interact_naive, interact_fft):
        np.testing.assert_allclose(fn(hs, ht).data.ravel(), expect, atol=1e-5)


def test_cross_length():
    rng = np.random.default_rng(2)
    out = interact_fft(Tensor(rng.normal(size=(3, 4, 2))), Tensor(rng.normal(size=(3, 2, 2))))
    assert out.shape == (3, 5, 2)


def test_delta_source_identity():
    ht = np.random.default_rng(3).normal(size=(2, 4, 3))
    hs = np.zeros((2, 3, 3))
    hs[:, 0] = 1.0
    out = interact_fft(Tensor(hs), Tensor(ht)).data
    np.testing.assert_allclose(out[:, :4], ht, atol=1e-6)
    np.testing.assert_allclose(out[:, 4:], 0.0, atol=1e-6)


def test_fft_matches_naive_1000():
    rng = np.random.default_rng(4)
    hs = rng.normal(size=(1000, 4, 8)).astype(np.float32)
    ht = rng.normal(size=(1000, 4, 8)).astype(np.float32)
    a = interact_fft(Tensor(hs), Tensor(ht)).data
    b = interact_naive(Tensor(hs), Tensor(ht)).data
    assert np.abs(a - b).max() < 1e-5
    np.testing.assert_allclose(a, conv_oracle(hs, ht), atol=1e-5)


def test_all_pairs_rows():
    rng = np.random.default_rng(5)
    hs, ht = rng.normal(size=(2, 3, 4)), rng.normal(size=(3, 2, 4))
    out = interact_fft(Tensor(hs), Tensor(ht), ALL_PAIRS).data
    assert out.shape == (6, 4, 4)
    ref = conv_oracle(np.repeat(hs, 3, axis=0), np.tile(ht, (2, 1, 1)))
    np.testing.assert_allclose(out, ref, atol=1e-5)
    np.testing.assert_allclose(interact_naive(Tensor(hs), Tensor(ht), ALL_PAIRS).data, ref, atol=1e-5)


def test_aligned_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        interact_fft(Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros((3, 3, 4))), ALIGNED)
    with pytest.raises(ShapeMismatch):
        interact_naive(Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros((2, 3, 5))))


def test_commutativity_and_linearity():
    rng = np.random.default_rng(6)
    hs, ht = rng.normal(size=(4, 3, 5)), rng.normal(size=(4, 6, 5))
    a = interact_fft(Tensor(hs), Tensor(ht)).data
    np.testing.assert_allclose(a, interact_fft(Tensor(ht), Tensor(hs)).data, atol=1e-5)
    np.testing.assert_allclose(interact_fft(Tensor(2.5 * hs), Tensor(ht)).data, 2.5 * a, atol=1e-4)


def test_enumerate_combinations():
    g = HeteroGraph()
    U, M, G, O = (g.add_type(n, c) for n, c in (("user", "U"), ("movie", "M"), ("genre", "G"), ("occ", "O")))
    g.add_relation("user-movie", U, M)
    g.add_relation("movie-genre", M, G)
    g.add_relation("user-occ", U, O)
    g.add_relation("movie-movie", M, M)
    fourp = [g.metapath(x) for x in ("UMUM", "UMMM", "UOUM", "UMGM")]
    assert len(enumerate_combinations(g, fourp)) == 4
    two = [g.metapath("UMUM"), g.metapath("UM")]
    three = [g.metapath("MUMU"), g.metapath("MU"), g.metapath("MGMU")]
    assert len(enumerate_combinations(g, two, three, cross=True)) == 6
    (c,) = enumerate_combinations(g, [g.metapath("UMUM")])
    assert [t.code for t in c.target.types] == list("MUMU")
