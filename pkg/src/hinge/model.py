"""The full neighbourhood-interaction model and its no-interaction ablation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .aggregation import ElementAttention, PathAttention, PredictionHead
from .graph import HeteroGraph
from .interaction import ALIGNED, MetapathCombination, embed_paths, interact
from .sampler import walk
from .tensor import ParamStore, Tensor, concat, mean, stack


@dataclass(frozen=True)
class ModelConfig:
    E: int = 128
    heads: int = 3
    elem_temperature: float = 0.2
    path_temperature: float = 0.2
    nonlinearity: str = "elu"
    shared_qk: bool = True
    mode: str = ALIGNED
    method: str = "fft"
    interaction: str = "conv"  # "conv", or "none" for the ablation
    head_init: str = "xavier"


@dataclass
class PairPaths:
    """Sampled neighbourhoods for a batch of ``B`` pairs, one entry per combination.

    ``source[k]`` is ``(B, L_s, I_s)`` and ``target[k]`` is ``(B, L_t, I_t)``.
    """

    source: list[np.ndarray]
    target: list[np.ndarray]

    @property
    def B(self) -> int:
        return self.source[0].shape[0]

    def take(self, rows) -> "PairPaths":
        return PairPaths([s[rows] for s in self.source], [t[rows] for t in self.target])


class HingeModel:
    """Embedding tables, element attention, path attention and head.

    One embedding table per node type carries an extra final row for the pad
    node of that type.
    """

    def __init__(self, graph: HeteroGraph, combos: list[MetapathCombination], config: ModelConfig = ModelConfig(),
                 seed: int = 0):
        self.graph = graph
        self.combos = combos
        self.config = config
        self.seed = seed
        self.store = ParamStore(seed)
        E = config.E
        used = []
        for c in combos:
            for t in c.source.types + c.target.types:
                if t not in used:
                    used.append(t)
        used.sort(key=lambda t: t.id)
        self.tables = {t.name: self.store.add(f"emb.{t.name}", (graph.num_nodes(t) + 1, E)) for t in used}
        self.elem = ElementAttention(self.store, E, config.heads, config.elem_temperature, config.nonlinearity,
                                     config.shared_qk)
        self.path = PathAttention(self.store, E, config.path_temperature)
        self.head = PredictionHead(self.store, E, config.nonlinearity, config.head_init)

    @property
    def params(self):
        return list(self.store)

    def rows(self, batch: PairPaths, k: int) -> Tensor:
        """Interaction rows ``(B * R, M, E)`` for combination ``k``."""
        c = self.combos[k]
        src, tgt = batch.source[k], batch.target[k]
        B = src.shape[0]
        hs = embed_paths(src.reshape(-1, src.shape[-1]), c.source, self.tables)
        ht = embed_paths(tgt.reshape(-1, tgt.shape[-1]), c.target, self.tables)
        if self.config.interaction == "none":
            return stack([mean(hs, axis=1), mean(ht, axis=1)], axis=1)
        return interact(hs, ht, self.config.mode, self.config.method, groups=B)

    def path_embeddings(self, batch: PairPaths, return_alpha: bool = False):
        """``(B, N, E)`` stack of per-row embeddings over all combinations."""
        B = batch.B
        zs, alphas = [], []
        for k in range(len(self.combos)):
            z, a = self.elem(self.rows(batch, k), return_alpha=True)
            zs.append(z.reshape(B, -1, self.config.E))
            alphas.append(a)
        out = concat(zs, axis=1) if len(zs) > 1 else zs[0]
        return (out, alphas) if return_alpha else out

    def forward(self, batch: PairPaths, return_beta: bool = False):
        Z, beta = self.path(self.path_embeddings(batch), return_beta=True)
        y = self.head(Z)
        return (y, beta) if return_beta else y

    __call__ = forward

    def variant(self, **changes) -> "HingeModel":
        """A freshly initialised model with the same graph, combinations and seed."""
        return HingeModel(self.graph, self.combos, replace(self.config, **changes), self.seed)


def ablate_no_interaction(model: HingeModel) -> HingeModel:
    """Replace each convolution row with the (mean source, mean target) pair."""
    return model.variant(interaction="none", mode=ALIGNED)


class PathSampler:
    """Per-epoch neighbourhood batches for (source, target) pairs.

    Walks are keyed by anchor, so every pair sharing an anchor in an epoch
    sees the same paths.  Each metapath is walked once per epoch for every
    node of its anchor type and batches index into that table.
    """

    def __init__(self, graph: HeteroGraph, combos: list[MetapathCombination], L: int, seed: int):
        self.graph, self.combos, self.L, self.seed = graph, combos, L, seed
        self._epoch = None
        self._tables: dict = {}

    def table(self, metapath, epoch: int) -> np.ndarray:
        if epoch != self._epoch:
            self._tables, self._epoch = {}, epoch
        if metapath not in self._tables:
            n = self.graph.num_nodes(metapath.type(0))
            self._tables[metapath], _ = walk(self.graph, np.arange(n), metapath, self.L, self.seed, epoch)
        return self._tables[metapath]

    def sample(self, sources, targets, epoch: int = 0) -> PairPaths:
        sources = np.asarray(sources, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.int64)
        src = [self.table(c.source, epoch)[sources] for c in self.combos]
        tgt = [self.table(c.target, epoch)[targets] for c in self.combos]
        return PairPaths(src, tgt)
