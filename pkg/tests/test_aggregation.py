import json
import io

import numpy as np
import pytest

from hinge.aggregation import ElementAttention, PathAttention, PredictionHead, attention_record, element_attention, \
    path_attention, predict, write_attention_dump
from hinge.errors import NonPositiveTemperature, ShapeMismatch
from hinge.tensor import ParamStore, Tensor
from hinge.tensor.gradcheck import analytic_grad, numeric_grad, rel_error


def _elem(E=8, heads=3, seed=0, **kw):
    return ElementAttention(ParamStore(seed), E, heads, **kw)


def alpha_oracle(row, W_T, W_S, temp):
    """Straight-line scores from the row, independent of the module code."""
    h0 = row[0] @ W_T
    s = np.array([h0 @ (row[j] @ W_S) for j in range(row.shape[0])]) / temp
    e = np.exp(s - s.max())
    return e / e.sum()


def test_singleton_alpha():
    att = _elem()
    _, alphas = element_attention(np.random.default_rng(0).normal(size=(1, 8)), att)
    for a in alphas:
        np.testing.assert_allclose(a.data, [1.0])


def test_identical_rows_uniform_alpha():
    att = _elem()
    row = np.tile(np.random.default_rng(1).normal(size=8), (5, 1))
    _, alphas = element_attention(row, att)
    for a in alphas:
        np.testing.assert_allclose(a.data, 0.2, atol=1e-6)


@pytest.mark.parametrize("shared", [True, False])
def test_alpha_matches_oracle(shared):
    att = _elem(shared_qk=shared, temperature=0.7)
    row = np.random.default_rng(2).normal(size=(5, 8)) * 0.5
    _, alphas = element_attention(row.astype(np.float32), att)
    for n, a in enumerate(alphas):
        k = 0 if shared else n
        ref = alpha_oracle(row.astype(np.float32).astype(np.float64), att.W_T[k].data.astype(np.float64),
                           att.W_S[k].data.astype(np.float64), 0.7)
        np.testing.assert_allclose(a.data, ref, atol=1e-6)
        assert abs(a.data.sum() - 1) < 1e-6


def test_z_matches_direct_evaluation():
    att = _elem(heads=2, shared_qk=False, temperature=0.5)
    row = np.random.default_rng(3).normal(size=(4, 8)).astype(np.float64)
    z, _ = element_attention(row, att)
    c = np.zeros(8)
    for n in range(2):
        a = alpha_oracle(row, att.W_T[n].data, att.W_S[n].data, 0.5)
        c += (a[:, None] * (row @ att.W_C[n].data)).sum(0)
    pre = (c / 2) @ att.W_q.data + att.b_q.data
    ref = np.where(pre > 0, pre, np.expm1(pre))
    np.testing.assert_allclose(z.data, ref, atol=1e-5)


def test_element_shape_errors():
    att = _elem()
    with pytest.raises(ShapeMismatch):
        element_attention(np.zeros((3, 5)), att)
    with pytest.raises(NonPositiveTemperature):
        _elem(temperature=0)


def test_path_single_and_identical_rows():
    pa = PathAttention(ParamStore(0), 6)
    row = np.random.default_rng(4).normal(size=(1, 6))
    Z, beta = path_attention(row, pa)
    np.testing.assert_allclose(Z.data, row[0], rtol=1e-6)
    Z, beta = path_attention(np.vstack([row, row]), pa)
    np.testing.assert_allclose(beta.data, [0.5, 0.5])
    np.testing.assert_allclose(Z.data, row[0], rtol=1e-6)


def test_path_shift_and_permutation():
    pa = PathAttention(ParamStore(1), 6)
    stack = np.random.default_rng(5).normal(size=(7, 6))
    Z, beta = path_attention(stack, pa)
    pa.b.data += 3.0  # constant added to every score
    Z2, beta2 = path_attention(stack, pa)
    np.testing.assert_allclose(beta.data, beta2.data, atol=1e-6)
    perm = np.random.default_rng(6).permutation(7)
    Zp, betap = path_attention(stack[perm], pa)
    np.testing.assert_allclose(betap.data, beta2.data[perm], atol=1e-6)
    np.testing.assert_allclose(Zp.data, Z2.data, atol=1e-5)


def test_temperature_monotonic():
    stack = np.random.default_rng(7).normal(size=(5, 4))
    tops = []
    for t in (1.0, 0.5, 0.2, 0.1):
        store = ParamStore(3)
        pa = PathAttention(store, 4, temperature=t)
        _, beta = path_attention(stack, pa)
        tops.append(beta.data.max())
    assert all(a < b for a, b in zip(tops, tops[1:]))


def test_head_zero_and_saturation():
    head = PredictionHead(ParamStore(0), 4, init="zeros")
    np.testing.assert_allclose(predict(np.ones(4), head).data, [0.5])
    head.b2.data[:] = 30.0
    y = predict(np.ones(4), head).data
    assert y[0] >= 1 - 1e-7 and y[0] < 1


def test_head_gradient():
    store = ParamStore(2)
    head = PredictionHead(store, 4)
    Z = Tensor(np.random.default_rng(8).normal(size=(3, 4)))
    f = lambda: predict(Z, head).sum()
    params = list(store)
    for a, n in zip(analytic_grad(f, params), numeric_grad(f, params)):
        assert rel_error(a, n) < 1e-3


def test_attention_dump():
    rec = attention_record(3, 9, np.full(8, 1 / 8), np.tile(np.arange(5.0), (8, 1)), K=2)
    assert rec["beta_per_combination"] == [0.5, 0.5]
    assert rec["alpha_top5"][0] == [4, 3, 2, 1, 0]
    buf = io.StringIO()
    write_attention_dump(buf, [rec])
    assert json.loads(buf.getvalue())["target"] == 9
