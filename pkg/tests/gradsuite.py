"""Catalogue of differentiable primitives with random inputs for gradient checks."""

import numpy as np

from hinge import tensor as T
from hinge.interaction import ALL_PAIRS, interact_naive
from hinge.tensor.gradcheck import analytic_grad, numeric_grad, rel_error


def leaf(rng, *shape, lo=-1.0, hi=1.0):
    return T.Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def _weighted(out, w):
    return T.sum_(T.mul(out, w))


def cases(seed=0):
    """``name -> (f, leaves)`` where ``f()`` is a scalar tensor."""
    rng = np.random.default_rng(seed)
    out = {}

    def add(name, build, *leaves):
        y = build(*leaves)
        ys = y if isinstance(y, tuple) else (y,)
        ws = [rng.uniform(-1, 1, size=t.shape) for t in ys]

        def f():
            r = build(*leaves)
            rs = r if isinstance(r, tuple) else (r,)
            tot = None
            for t, w in zip(rs, ws):
                term = _weighted(t, w)
                tot = term if tot is None else tot + term
            return tot

        out[name] = (f, list(leaves))

    a, b = leaf(rng, 3, 4), leaf(rng, 3, 4)
    add("add", T.add, a, b)
    add("sub", T.sub, leaf(rng, 3, 4), leaf(rng, 4))
    add("mul", T.mul, leaf(rng, 2, 3, 4), leaf(rng, 3, 4))
    add("div", T.div, leaf(rng, 3, 4), leaf(rng, 3, 4, lo=0.5, hi=2.0))
    add("exp", T.exp, leaf(rng, 3, 4))
    add("log", T.log, leaf(rng, 3, 4, lo=0.5, hi=2.0))
    add("clip", lambda x: T.clip(x, -0.5, 0.5), T.Tensor(rng.choice([-0.9, -0.2, 0.1, 0.3, 0.8], (3, 4)), True))
    add("sigmoid", T.sigmoid, leaf(rng, 3, 4, lo=-3, hi=3))
    add("elu", T.elu, T.Tensor(rng.choice([-1.5, -0.3, 0.2, 0.9], (3, 4)), True))
    add("relu", T.relu, T.Tensor(rng.choice([-1.5, -0.3, 0.2, 0.9], (3, 4)), True))
    add("tanh", T.tanh, leaf(rng, 3, 4))
    add("sum", lambda x: T.sum_(x, axis=1), leaf(rng, 2, 3, 4))
    add("mean", lambda x: T.mean(x, axis=0, keepdims=True), leaf(rng, 2, 3, 4))
    add("reshape", lambda x: T.reshape(x, (4, 3)), leaf(rng, 3, 4))
    add("transpose", lambda x: T.transpose(x, (2, 0, 1)), leaf(rng, 2, 3, 4))
    add("getitem", lambda x: x[:, 1:, 0], leaf(rng, 2, 3, 4))
    add("take_rows", lambda x: T.take_rows(x, np.array([0, 2, 2, 1])), leaf(rng, 3, 4))
    add("stack", lambda x, y: T.stack([x, y], axis=1), leaf(rng, 3, 4), leaf(rng, 3, 4))
    add("concat", lambda x, y: T.concat([x, y], axis=0), leaf(rng, 2, 4), leaf(rng, 3, 4))
    add("matmul", T.matmul, leaf(rng, 3, 4), leaf(rng, 4, 2))
    add("matmul_rank3", T.matmul, leaf(rng, 2, 3, 4), leaf(rng, 4, 2))
    add("matmul_batched", T.matmul, leaf(rng, 2, 3, 4), leaf(rng, 2, 4, 2))
    add("embed", lambda t: T.embed(t, np.array([[0, 2], [2, 1]])), leaf(rng, 4, 3))
    add("softmax_t", lambda x: T.softmax_t(x, 0.5, axis=1), leaf(rng, 3, 5))
    add("rowdot", T.rowdot, leaf(rng, 3, 4, 5), leaf(rng, 3, 5))
    add("rowmix", T.rowmix, leaf(rng, 3, 4, 5), leaf(rng, 3, 4))
    add("conv_fft", T.conv_fft, leaf(rng, 3, 4, 5), leaf(rng, 3, 3, 5))
    add("interact_naive_all_pairs", lambda s, t: interact_naive(s, t, ALL_PAIRS), leaf(rng, 2, 3, 4),
        leaf(rng, 3, 2, 4))
    add("rfft", lambda x: T.rfft(x, axis=1), leaf(rng, 2, 6, 3))
    add("rfft_odd", lambda x: T.rfft(x, axis=0), leaf(rng, 5, 2))
    add("irfft", lambda r, i: T.irfft(r, i, 6, axis=1), leaf(rng, 2, 4, 3), leaf(rng, 2, 4, 3))
    return out


def check(f, leaves, eps=1e-3) -> float:
    ana = analytic_grad(f, leaves)
    num = numeric_grad(f, leaves, eps)
    return max(rel_error(a, n) for a, n in zip(ana, num))


def global_rel_error(ana, num) -> float:
    """Norm-wise error over the concatenated gradient vector."""
    a = np.concatenate([x.ravel() for x in ana])
    n = np.concatenate([x.ravel() for x in num])
    return rel_error(a, n)


def full_model_gradients(seed=0, E=4, heads=2, L=3):
    """Autodiff and central-difference gradients of the log loss for the whole
    model on the two-user toy graph, plus the per-parameter names."""
    from hinge.interaction import enumerate_combinations
    from hinge.model import HingeModel, ModelConfig, PathSampler
    from hinge.synthetic import figure_graph
    from hinge.trainer import bce

    g = figure_graph()
    combos = enumerate_combinations(g, [g.metapath("UMDM"), g.metapath("UM")], cross=True)
    model = HingeModel(g, combos, ModelConfig(E=E, heads=heads), seed=seed)
    batch = PathSampler(g, combos, L, seed).sample([0, 1, 0], [1, 0, 0])
    labels = np.array([1, 0, 1])

    def f():
        return bce(model(batch), labels)

    params = model.params
    return analytic_grad(f, params), numeric_grad(f, params), [p.name for p in params]
