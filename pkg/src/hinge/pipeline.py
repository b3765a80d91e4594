"""End-to-end runs: split, build, train, test and write artefacts."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .data import Dataset, split
from .interaction import ALIGNED, ALL_PAIRS, enumerate_combinations
from .model import HingeModel, ModelConfig, PathSampler
from .tensor import save_checkpoint
from .trainer import TrainConfig, TrainResult, build_topn_lists, evaluate_ctr, evaluate_topn, train, write_history, \
    write_manifest

log = logging.getLogger(__name__)


def model_config(cfg: TrainConfig) -> ModelConfig:
    return ModelConfig(
        E=cfg.E,
        heads=cfg.heads,
        elem_temperature=cfg.elem_temperature,
        path_temperature=cfg.path_temperature,
        nonlinearity=cfg.nonlinearity,
        shared_qk=cfg.shared_qk,
        mode=ALL_PAIRS if cfg.all_pairs_enabled else ALIGNED,
        method=cfg.method,
        interaction=cfg.interaction,
    )


def build_model(ds: Dataset, cfg: TrainConfig) -> HingeModel:
    g = ds.graph
    mps = [g.metapath(label) for label in cfg.metapaths]
    combos = enumerate_combinations(g, mps, cross=cfg.cross_enabled)
    if cfg.all_pairs_enabled:
        log.warning("all-pairs interaction costs O(L^2) rows per combination (L=%d -> %d rows)", cfg.L, cfg.L ** 2)
    return HingeModel(g, combos, model_config(cfg), seed=cfg.seed)


def build_provider(ds: Dataset, model: HingeModel, cfg: TrainConfig, train_pairs=None):
    if not cfg.ns_enabled:
        return PathSampler(ds.graph, model.combos, cfg.L, cfg.seed)
    from .selection import NSPathProvider, train_filter

    filt = train_filter(ds.graph, model.combos, train_pairs, cfg)
    return NSPathProvider(ds.graph, model.combos, filt, cfg)


def interactions(ds: Dataset) -> dict:
    seen: dict = {}
    for s, t in zip(ds.pairs.sources.tolist(), ds.pairs.targets.tolist()):
        seen.setdefault(s, set()).add(t)
    return seen


def run(ds: Dataset, cfg: TrainConfig, out_dir=None, topn: bool = True, callback=None):
    """Train on the 6:2:2 split of ``ds`` and evaluate on its test part.

    Returns ``(model, result, splits)``; ``result.test`` holds test metrics.
    """
    tr, va, te = split(ds.pairs, cfg.split, cfg.seed)
    model = build_model(ds, cfg)
    provider = build_provider(ds, model, cfg, tr)
    result: TrainResult = train(model, tr, va, cfg, provider, callback=callback)
    test = evaluate_ctr(model, provider, te, cfg.eval_batch_size)
    if topn and cfg.topn_negatives > 0 and np.any(te.labels == 1):
        lists = build_topn_lists(te, interactions(ds), ds.graph.num_nodes(ds.target_type), cfg.topn_negatives,
                                 seed=cfg.seed, max_users=cfg.topn_users)
        if lists:
            test.update(evaluate_topn(model, provider, lists, cfg.eval_batch_size))
    result.test = test
    result.history.append({"epoch": result.best_epoch, "split": "test", **test})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_history(result.history, out / "history.csv")
        save_checkpoint(model.store, out / "model.hnge")
        write_manifest(out / "manifest.txt", cfg, {
            "split_unit": "interaction",
            "best_epoch": result.best_epoch,
            "epochs_run": result.epochs_run,
            "n_train": len(tr),
            "n_val": len(va),
            "n_test": len(te),
            "graph_checksum": ds.graph.checksum(),
        })
    return model, result, (tr, va, te)
