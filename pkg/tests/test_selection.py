import numpy as np
import pytest

from hinge import synthetic
from hinge.data import LabeledPairs, split
from hinge.errors import BudgetExceedsCandidates, EmptyBuffer, PrefixMismatch
from hinge.graph import NodeRef
from hinge.interaction import enumerate_combinations
from hinge.model import HingeModel, ModelConfig, PairPaths, PathSampler
from hinge.sampler import PathBatch, PathGroup, PathGroupBuffer, group_paths, sample_extensions, sample_paths
from hinge.selection import LOW_ORDER, NSPathProvider, SampleRates, allocate, filter_beta, make_filter, ns_score, \
    ns_select, ns_train_epoch, train_filter, write_rates
from hinge.tensor import Adam
from hinge.trainer import TrainConfig

from conftest import random_graph


def _buffer(g, u, seed=0, L=16, per=8):
    low = sample_paths(g, g.node("U", u), g.metapath("UM"), L, seed)
    high = sample_extensions(g, low, g.metapath("UMUM"), per, seed)
    return group_paths(low, high)


def _setting(seed=0, E=8):
    g = random_graph(seed, p=0.4)
    combos = enumerate_combinations(g, [g.metapath("UMUM")])
    filt = make_filter(g, combos, ModelConfig(E=E, heads=2), seed=seed)
    return g, combos, filt


def test_one_group_rate_is_one():
    g, combos, filt = _setting()
    low = PathBatch(g.metapath("UM"), g.node("U", 0), np.array([[0, 2]] * 4), np.zeros((4, 2), bool))
    buf = group_paths(low, low)
    partner = _target_buffer(g, 3, L=4)
    rates = ns_score(filt, buf, partner)
    np.testing.assert_allclose(rates.beta, [1.0])


def _target_buffer(g, m, L=16):
    low = sample_paths(g, g.node("M", m), g.metapath("MU"), L, 0)
    return group_paths(low, low)


def test_identical_embeddings_split_evenly():
    g, combos, filt = _setting()
    low = PathBatch(g.metapath("UM"), g.node("U", 0), np.array([[0, 1], [0, 2]] * 4), np.zeros((8, 2), bool))
    table = filt.tables["movie"]
    table.data[2] = table.data[1]
    plow = PathBatch(g.metapath("MU"), g.node("M", 0), np.zeros((8, 2), int), np.zeros((8, 2), bool))
    rates = ns_score(filt, group_paths(low, low), group_paths(plow, plow))
    np.testing.assert_allclose(rates.beta, [0.5, 0.5], atol=1e-6)


def test_rates_sum_to_one_and_empty():
    g, combos, filt = _setting(1)
    for u in range(5):
        buf = _buffer(g, u)
        if buf.low.pad_mask.any():
            continue
        r = ns_score(filt, buf, _target_buffer(g, 1))
        assert abs(r.beta.sum() - 1) < 1e-6 and np.all(r.beta >= 0)
        assert abs(buf.rates().sum() - 1) < 1e-6
    empty = PathGroupBuffer(buf.low, buf.high, [], 0)
    with pytest.raises(EmptyBuffer):
        ns_score(filt, empty, _target_buffer(g, 1))


def test_filter_rejects_long_paths():
    g, combos, filt = _setting()
    sampler = PathSampler(g, combos, 4, 0)  # full-length metapaths
    with pytest.raises(PrefixMismatch):
        filter_beta(filt, sampler.sample([0, 1], [0, 1]))
    high = sample_paths(g, g.node("U", 0), g.metapath("UMUM"), 4, 0)
    with pytest.raises(PrefixMismatch):
        ns_score(filt, group_paths(high, high), _target_buffer(g, 0))


def test_allocate_examples():
    assert allocate(np.full(8, 1 / 8), [16] * 8, 16).tolist() == [2] * 8
    beta = np.zeros(8)
    beta[0] = 1.0
    assert allocate(beta, [16] * 8, 16).tolist() == [16] + [0] * 7
    # capped at group size, the rest goes to the next-largest rate
    beta = np.array([0.9, 0.0, 0.1])
    assert allocate(beta, [10, 8, 8], 16).tolist() == [10, 0, 6]
    # ties on the fractional part favour the lower index
    assert allocate([0.5, 0.5], [8, 8], 3).tolist() == [2, 1]
    with pytest.raises(BudgetExceedsCandidates):
        allocate([1.0], [4], 5)


def test_select_128_to_16():
    g, combos, filt = _setting(2)
    buf = _buffer(g, 0)
    assert buf.high.L == 128
    rates = ns_score(filt, buf, _target_buffer(g, 2))
    kept = ns_select(rates, buf, 16, seed=3)
    assert kept.high.L == 16
    assert rates.plan.sum() == 16
    for gr in kept.groups:
        for j in gr.members:
            assert tuple(kept.high.paths[j, :LOW_ORDER]) == gr.key
    again = ns_select(SampleRates(rates.beta), buf, 16, seed=3)
    assert np.array_equal(again.high.paths, kept.high.paths)
    with pytest.raises(BudgetExceedsCandidates):
        ns_select(rates, buf, 129, seed=0)


def test_rates_sidecar(tmp_path):
    rates = SampleRates([0.75, 0.25], np.array([12, 4]))
    write_rates(tmp_path / "r.csv", [(5, rates)])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines == ["anchor,group,beta,survivors", "5,0,0.750000,12", "5,1,0.250000,4"]


def _toy_filter(head_init="xavier", seed=0):
    ds = synthetic.ns_planted(seed, n_users=20, n_items=20, n_pairs=60)
    g = ds.graph
    combos = enumerate_combinations(g, [g.metapath("UAI")])
    filt = make_filter(g, combos, ModelConfig(E=8, heads=2, head_init=head_init), seed=seed)
    return ds, filt, PathSampler(g, filt.combos, 4, seed)


def test_zero_head_first_loss_ln2():
    ds, filt, sampler = _toy_filter("zeros")
    opt = Adam(filt.params, lr=1e-3)
    loss = ns_train_epoch(filt, opt, sampler, ds.pairs, epoch=1, batch_size=len(ds.pairs))
    assert abs(loss - np.log(2)) < 1e-6


def test_overfit_single_example():
    ds, filt, sampler = _toy_filter(seed=1)
    one = ds.pairs.take([0])
    opt = Adam(filt.params, lr=1e-2)
    for _ in range(200):
        loss = ns_train_epoch(filt, opt, sampler, one, epoch=1, batch_size=1)
    assert loss < 0.1


def test_descent_property():
    ok = 0
    seeds = range(20)
    for s in seeds:
        ds, filt, sampler = _toy_filter(seed=s)
        batch = ds.pairs.take(np.arange(32))
        opt = Adam(filt.params, lr=1e-3)
        losses = [ns_train_epoch(filt, opt, sampler, batch, epoch=1, batch_size=32) for _ in range(6)]
        ok += all(b < a for a, b in zip(losses, losses[1:]))
    assert ok / len(seeds) >= 0.95


def test_provider_shapes_and_determinism():
    ds = synthetic.ns_planted(0, n_users=30, n_items=30, n_pairs=120)
    cfg = TrainConfig(E=8, L=16, heads=2, metapaths=("UAI",), ns_enabled=True, ns_epochs=1, seed=0)
    g = ds.graph
    combos = enumerate_combinations(g, [g.metapath("UAI")])
    filt = train_filter(g, combos, ds.pairs, cfg)
    prov = NSPathProvider(g, combos, filt, cfg)
    b1 = prov.sample(ds.pairs.sources[:5], ds.pairs.targets[:5], 0)
    b2 = NSPathProvider(g, combos, filt, cfg).sample(ds.pairs.sources[:5], ds.pairs.targets[:5], 0)
    assert b1.source[0].shape == (5, 16, 3) and b1.target[0].shape == (5, 16, 3)
    assert np.array_equal(b1.source[0], b2.source[0])
    assert (b1.source[0][:, :, 0] == ds.pairs.sources[:5, None]).all()
