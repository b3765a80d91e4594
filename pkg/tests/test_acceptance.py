"""Acceptance checks, one test per criterion."""

import csv
from pathlib import Path

import numpy as np
import pytest

from gradsuite import cases, check, full_model_gradients, global_rel_error
from hinge import synthetic
from hinge.aggregation import ElementAttention, PathAttention
from hinge.cli import main
from hinge.data import split
from hinge.interaction import benchmark, interact_fft, interact_naive
from hinge.model import ablate_no_interaction
from hinge.pipeline import build_model, build_provider, run
from hinge.selection import NSPathProvider, marginal_rates, train_filter
from hinge.tensor import ParamStore, Tensor, backward, no_grad, softmax_t, sum_, mul
from hinge.tensor.gradcheck import rel_error
from hinge.trainer import TrainConfig, evaluate_ctr, train
from test_interaction import conv_oracle

ROOT = Path(__file__).resolve().parents[1]
ML_RUN = ROOT / "runs" / "ml100k"


def _conv_grads(fn, hs, ht, w):
    a, b = Tensor(hs, requires_grad=True), Tensor(ht, requires_grad=True)
    backward(sum_(mul(fn(a, b), w)))
    return a.grad, b.grad


def test_criterion_1_fft_matches_naive():
    rng = np.random.default_rng(0)
    n_pairs, worst_fwd, worst_grad = 0, 0.0, 0.0
    sizes = (2, 3, 4, 6)
    for Is in sizes:
        for It in sizes:
            for L in (1, 16):
                for E in (1, 8, 64):
                    for _ in range(11):
                        hs = rng.normal(size=(L, Is, E)).astype(np.float32)
                        ht = rng.normal(size=(L, It, E)).astype(np.float32)
                        ref = conv_oracle(hs, ht)
                        f = interact_fft(Tensor(hs), Tensor(ht)).data
                        n = interact_naive(Tensor(hs), Tensor(ht)).data
                        assert np.abs(n - ref).max() < 1e-5
                        worst_fwd = max(worst_fwd, float(np.abs(f - n).max()))
                        w = rng.uniform(-1, 1, size=ref.shape).astype(np.float32)
                        gf = _conv_grads(interact_fft, hs, ht, w)
                        gn = _conv_grads(interact_naive, hs, ht, w)
                        worst_grad = max(worst_grad, *(rel_error(a, b) for a, b in zip(gf, gn)))
                        n_pairs += 1
    assert n_pairs >= 1000
    assert worst_fwd < 1e-5
    assert worst_grad < 1e-4


def test_criterion_2_gradient_suite():
    errs = {name: check(f, leaves) for name, (f, leaves) in cases(0).items()}
    bad = {k: v for k, v in errs.items() if not v < 1e-3}
    assert not bad, bad
    ana, num, _ = full_model_gradients()
    assert global_rel_error(ana, num) < 1e-2


def test_criterion_3_fft_speedup():
    rows = benchmark([16, 64], L=256, E=64, repeat=3)
    speed = {r[0]: r[5] for r in rows}
    assert speed[64] >= 2.0
    assert speed[64] > speed[16]


def test_criterion_4_movielens_ctr():
    hist = ML_RUN / "history.csv"
    if not hist.exists():
        pytest.fail(f"no Movielens 100K run at {ML_RUN}; run `hinge train --config configs/ml100k.cfg`")
    with open(hist, newline="") as f:
        test = [r for r in csv.DictReader(f) if r["split"] == "test"]
    assert test, "run has no test row"
    acc, ll = float(test[-1]["acc"]), float(test[-1]["logloss"])
    assert acc >= 0.84 and ll <= 0.34, f"test acc={acc:.4f} logloss={ll:.4f}"


def test_criterion_5_interaction_ablation():
    gaps = []
    for seed in range(5):
        ds = synthetic.planted_and(seed)
        cfg = TrainConfig(E=16, L=8, metapaths=("UTI",), batch_size=64, max_epochs=30, patience=8, seed=seed)
        tr, va, te = split(ds.pairs, cfg.split, cfg.seed)
        full = build_model(ds, cfg)
        prov = build_provider(ds, full, cfg, tr)
        accs = []
        for m in (full, ablate_no_interaction(full)):
            train(m, tr, va, cfg, prov)
            accs.append(evaluate_ctr(m, prov, te)["acc"])
        gaps.append(accs[0] - accs[1])
    assert all(g >= 0.05 for g in gaps), gaps


def test_criterion_6_ns_recovery():
    hits, wins = 0, 0
    for seed in range(20):
        ds = synthetic.ns_planted(seed)
        cfg = TrainConfig(E=16, L=16, metapaths=("UAI",), batch_size=64, max_epochs=20, patience=8,
                          ns_enabled=True, ns_epochs=20, seed=seed)
        tr, va, te = split(ds.pairs, cfg.split, cfg.seed)
        combos = build_model(ds, cfg).combos
        filt = train_filter(ds.graph, combos, tr, cfg)
        n_items = ds.graph.num_nodes(ds.target_type)
        keys, rates = marginal_rates(filt, 0, np.arange(n_items))
        hits += int(keys[np.argmax(rates), 1]) == ds.meta["genre_of_user"][0]
        accs = []
        for uniform in (False, True):
            m = build_model(ds, cfg)
            prov = NSPathProvider(ds.graph, m.combos, filt, cfg, uniform=uniform)
            train(m, tr, va, cfg, prov)
            accs.append(evaluate_ctr(m, prov, te)["acc"])
        wins += accs[0] >= accs[1]
    assert hits >= 18, hits
    assert wins >= 16, wins


def test_criterion_7_cross_length():
    rng = np.random.default_rng(7)
    for Is in range(1, 7):
        for It in range(1, 7):
            if Is == It:
                continue
            out = interact_fft(Tensor(rng.normal(size=(3, Is, 4))), Tensor(rng.normal(size=(3, It, 4))))
            assert out.shape[1] == Is + It - 1
    ds = synthetic.toy_dataset(0)
    cfg = TrainConfig(E=8, L=4, metapaths=("UMUM", "UM"), cross_enabled=True, batch_size=16, max_epochs=3,
                      patience=3)
    model = build_model(ds, cfg)
    mixed = [k for k, c in enumerate(model.combos) if c.source.length != c.target.length]
    assert mixed
    prov = build_provider(ds, model, cfg)
    batch = prov.sample(ds.pairs.sources[:2], ds.pairs.targets[:2], 0)
    for k in mixed:
        c = model.combos[k]
        with no_grad():
            assert model.rows(batch, k).shape[1] == c.source.length + c.target.length - 1
    _, result, _ = run(ds, cfg, topn=False)
    assert np.isfinite(result.test["logloss"])


def test_criterion_8_attention_properties():
    rng = np.random.default_rng(8)
    fails = {"norm": 0, "shift": 0, "perm": 0, "argmax": 0}
    trials = 10_000
    per_draw = 100
    for d in range(trials // per_draw):
        E, M, N = int(rng.integers(1, 9)), int(rng.integers(1, 9)), int(rng.integers(1, 33))
        store = ParamStore(d)
        elem = ElementAttention(store, E, heads=3)
        path = PathAttention(store, E)
        x = rng.normal(size=(per_draw, M, E))
        z = rng.normal(size=(per_draw, N, E))
        with no_grad():
            alpha = elem.weights(Tensor(x))[0].data.astype(np.float64)
            # a 2^-10 grid keeps score + shift exact in float32
            sc = np.round(path.scores(Tensor(z)).data.astype(np.float64) * 1024) / 1024
            beta = softmax_t(Tensor(sc), 0.2, axis=1).data.astype(np.float64)
            fails["norm"] += int(np.sum(np.abs(alpha.sum(1) - 1) > 1e-6) + np.sum(np.abs(beta.sum(1) - 1) > 1e-6))
            shift = rng.integers(-10240, 10240, size=(per_draw, 1)) / 1024
            b2 = softmax_t(Tensor(sc + shift), 0.2, axis=1).data
            fails["shift"] += int(np.sum(np.abs(b2 - beta).max(1) > 1e-6))
            perm = rng.permutation(N)
            _, bp = path(Tensor(z[:, perm]), return_beta=True)
            _, bb = path(Tensor(z), return_beta=True)
            # float32 matmul may round a moved row differently by one ulp
            fails["perm"] += int(np.sum(np.abs(bp.data - bb.data[:, perm]).max(1) > 1e-5))
            c = rng.uniform(0.1, 10, size=(per_draw, 1))
            bs = softmax_t(Tensor(sc * c), 0.2, axis=1).data
            fails["argmax"] += int(np.sum(np.argmax(bs, 1) != np.argmax(sc, 1)))
    assert fails == {"norm": 0, "shift": 0, "perm": 0, "argmax": 0}


def test_criterion_9_determinism(tmp_path):
    prep = tmp_path / "prep"
    assert main(["prepare", "--format", "toy", "--out", str(prep)]) == 0
    outs = []
    for name in ("a", "b"):
        cfg = tmp_path / f"{name}.cfg"
        cfg.write_text(f"data=prep\nout=run_{name}\nmetapaths=UMUM,UMGM\nE=8\nL=4\nmax_epochs=5\npatience=3\n"
                       "batch_size=16\n")
        assert main(["train", "--config", str(cfg), "--seed", "7"]) == 0
        outs.append(tmp_path / f"run_{name}")
    for fname in ("history.csv", "model.hnge"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()
