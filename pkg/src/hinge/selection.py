"""Neighbourhood-based path selection.

A filter model sees only 1-hop prefixes of each metapath.  Its path-level
attention, summed over the rows that share a prefix, becomes the sample rate
of that prefix's group of high-order extensions, and a fixed budget of
extensions is kept per anchor.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import BudgetExceedsCandidates, EmptyBuffer, PrefixMismatch
from .interaction import ALIGNED, ALL_PAIRS, MetapathCombination
from .model import HingeModel, ModelConfig, PairPaths, PathSampler
from .sampler import PathGroup, PathGroupBuffer, extend_many
from .tensor import Adam, backward, no_grad

log = logging.getLogger(__name__)

LOW_ORDER = 2  # nodes in a 1-hop prefix


@dataclass
class SampleRates:
    beta: np.ndarray
    plan: np.ndarray | None = None

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)


def filter_combos(combos: list[MetapathCombination]) -> list[MetapathCombination]:
    return [MetapathCombination(c.source.prefix(LOW_ORDER), c.target.prefix(LOW_ORDER), k)
            for k, c in enumerate(combos)]


def make_filter(graph, combos, config: ModelConfig, seed: int = 0) -> HingeModel:
    """Separate parameter set over the 1-hop prefixes of ``combos``."""
    return HingeModel(graph, filter_combos(combos), config, seed=seed)


def _check_low(model: HingeModel, batch: PairPaths):
    for k, (s, t) in enumerate(zip(batch.source, batch.target)):
        if s.shape[-1] != LOW_ORDER or t.shape[-1] != LOW_ORDER:
            raise PrefixMismatch(f"filter takes 1-hop paths only, combination {k} has lengths "
                                 f"{s.shape[-1]} and {t.shape[-1]}")


def filter_beta(model: HingeModel, batch: PairPaths) -> list[np.ndarray]:
    """Path-level attention split per combination, each ``(B, R_k)`` and renormalised."""
    _check_low(model, batch)
    with no_grad():
        _, beta = model(batch, return_beta=True)
    b = beta.data.astype(np.float64)
    all_pairs = model.config.mode == ALL_PAIRS
    out, lo = [], 0
    for s, t in zip(batch.source, batch.target):
        n = s.shape[1] * t.shape[1] if all_pairs else s.shape[1]
        part = b[:, lo: lo + n]
        lo += n
        out.append(part / part.sum(axis=1, keepdims=True))
    return out


def side_weights(beta_k: np.ndarray, ls: int, lt: int, side: str, all_pairs: bool) -> np.ndarray:
    """Per-prefix weight on one side: ``(B, R)`` rows -> ``(B, L_side)``.

    All-pairs rows are ordered source-major, so a source prefix collects the
    rows it forms with every target prefix.
    """
    if not all_pairs:
        return beta_k
    m = beta_k.reshape(-1, ls, lt)
    return m.sum(axis=2) if side == "source" else m.sum(axis=1)


def group_rates(row_beta: np.ndarray, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean row weight per distinct prefix, normalised over groups.

    A group stands for one low-order path, so duplicate draws of it do not add
    weight.  Groups follow first appearance.
    """
    _, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    order = np.argsort(first, kind="stable")
    remap = np.empty_like(order)
    remap[order] = np.arange(order.size)
    gid = remap[inv]
    rates = np.bincount(gid, weights=row_beta, minlength=order.size) / np.bincount(gid, minlength=order.size)
    return rates / rates.sum(), gid


def ns_score(filt: HingeModel, low_groups: PathGroupBuffer, partner: PathGroupBuffer, combo: int = 0,
             side: str = "source") -> SampleRates:
    """Sample rates for the groups of ``low_groups`` against the other endpoint ``partner``.

    ``side`` says which end of combination ``combo`` ``low_groups`` belongs to.
    """
    if low_groups.G == 0 or low_groups.low.L == 0:
        raise EmptyBuffer("no low-order paths to score")
    low = low_groups.low.paths
    other = partner.low.paths
    if low.shape[-1] != LOW_ORDER or other.shape[-1] != LOW_ORDER:
        raise PrefixMismatch("filter takes 1-hop paths only")
    src, tgt = [], []
    for k, fc in enumerate(filt.combos):
        if k == combo:
            s, t = (low, other) if side == "source" else (other, low)
        else:
            # a single pad row keeps the other combinations well formed
            s = np.array([[filt.graph.num_nodes(x) for x in fc.source.types]])
            t = np.array([[filt.graph.num_nodes(x) for x in fc.target.types]])
        src.append(s[None])
        tgt.append(t[None])
    beta = filter_beta(filt, PairPaths(src, tgt))[combo]
    ls, lt = src[combo].shape[1], tgt[combo].shape[1]
    beta = side_weights(beta, ls, lt, side, filt.config.mode == ALL_PAIRS)[0]
    rates = np.array([beta[g.low_rows].mean() for g in low_groups.groups])
    rates = rates / rates.sum()
    low_groups.set_rates(rates)
    return SampleRates(rates)


def allocate(beta, sizes, budget: int) -> np.ndarray:
    """Largest-remainder split of ``budget`` proportional to ``beta``, capped at ``sizes``.

    Ties go to the lower group index; capped excess spills to the largest
    remaining ``beta`` with free capacity.
    """
    beta = np.asarray(beta, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.int64)
    if budget > sizes.sum():
        raise BudgetExceedsCandidates(f"budget {budget} exceeds {int(sizes.sum())} candidates")
    quota = beta * budget
    alloc = np.floor(quota + 1e-9).astype(np.int64)
    left = budget - int(alloc.sum())
    idx = np.arange(beta.size)
    if left > 0:
        frac = quota - alloc
        order = np.lexsort((idx, -frac))
        alloc[order[:left]] += 1
    elif left < 0:
        order = np.lexsort((idx, beta))
        for g in order:
            take = min(-left, alloc[g])
            alloc[g] -= take
            left += take
            if left == 0:
                break
    excess = int(np.maximum(alloc - sizes, 0).sum())
    alloc = np.minimum(alloc, sizes)
    for g in np.lexsort((idx, -beta)):
        if excess == 0:
            break
        add = min(excess, int(sizes[g] - alloc[g]))
        alloc[g] += add
        excess -= add
    return alloc


def _draw(members_per_group, alloc, rng) -> np.ndarray:
    keep = []
    for mem, n in zip(members_per_group, alloc):
        if n:
            keep.append(rng.choice(np.asarray(mem), int(n), replace=False))
    return np.sort(np.concatenate(keep)) if keep else np.empty(0, dtype=np.int64)


def ns_select(rates: SampleRates, groups: PathGroupBuffer, budget: int, seed: int) -> PathGroupBuffer:
    """Keep ``budget`` extensions: allocate across groups, then draw uniformly inside each."""
    if groups.G == 0:
        raise EmptyBuffer("no groups to select from")
    sizes = [len(g.members) for g in groups.groups]
    alloc = allocate(rates.beta, sizes, budget)
    rates.plan = alloc
    rng = np.random.default_rng([seed, groups.high.anchor.type.id, groups.high.anchor.index])
    keep = _draw([g.members for g in groups.groups], alloc, rng)
    pos = {int(j): n for n, j in enumerate(keep)}
    new_groups = [PathGroup(g.key, list(g.low_rows), [pos[j] for j in g.members if j in pos], g.sample_rate)
                  for g in groups.groups]
    return PathGroupBuffer(groups.low, groups.subset(keep), new_groups, groups.dropped)


def ns_train_epoch(filt: HingeModel, opt: Adam, sampler: PathSampler, pairs, epoch: int = 1,
                   batch_size: int = 128, seed: int = 0) -> float:
    """One pass of log-loss minimisation over 1-hop neighbourhoods; returns the mean loss."""
    from .trainer import bce

    rng = np.random.default_rng([seed, epoch, 7])
    perm = rng.permutation(len(pairs))
    total = 0.0
    for lo in range(0, len(pairs), batch_size):
        idx = perm[lo: lo + batch_size]
        batch = sampler.sample(pairs.sources[idx], pairs.targets[idx], epoch)
        _check_low(filt, batch)
        loss = bce(filt(batch), pairs.labels[idx])
        opt.zero_grad()
        backward(loss)
        opt.step()
        total += float(loss.data) * len(idx)
    return total / max(len(pairs), 1)


@dataclass
class FilterState:
    model: HingeModel
    sampler: PathSampler
    losses: list


def train_filter(graph, combos, train_pairs, cfg) -> FilterState:
    """Fit the filter for ``cfg.ns_epochs`` epochs on 1-hop prefixes of ``combos``."""
    from .pipeline import model_config

    mc = replace(model_config(cfg), mode=ALL_PAIRS if cfg.ns_all_pairs else ALIGNED)
    filt = make_filter(graph, combos, mc, seed=cfg.seed + 1)
    sampler = PathSampler(graph, filt.combos, cfg.L, cfg.seed)
    opt = Adam(filt.params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    losses = []
    for e in range(1, cfg.ns_epochs + 1):
        losses.append(ns_train_epoch(filt, opt, sampler, train_pairs, e, cfg.batch_size, cfg.seed))
        log.info("filter epoch %d loss %.4f", e, losses[-1])
    return FilterState(filt, sampler, losses)


def marginal_rates(filt: FilterState, anchor: int, partners, combo: int = 0, side: str = "source",
                   epoch: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Group keys of ``anchor`` and their sample rates averaged over ``partners``."""
    partners = np.asarray(partners, dtype=np.int64)
    mine = np.full(partners.size, anchor, dtype=np.int64)
    src, tgt = (mine, partners) if side == "source" else (partners, mine)
    low = filt.sampler.sample(src, tgt, epoch)
    ls, lt = low.source[combo].shape[1], low.target[combo].shape[1]
    w = side_weights(filter_beta(filt.model, low)[combo], ls, lt, side, filt.model.config.mode == ALL_PAIRS)
    keys = (low.source if side == "source" else low.target)[combo][0]
    rates = np.mean([group_rates(row, keys)[0] for row in w], axis=0)
    _, gid = group_rates(w[0], keys)
    first = [int(np.flatnonzero(gid == g)[0]) for g in range(rates.size)]
    return keys[first], rates


class NSPathProvider:
    """Per-pair neighbourhoods chosen by the filter's sample rates.

    For each anchor ``L`` 1-hop prefixes are walked and each is extended
    ``ns_candidates / L`` times; ``ns_budget`` of those candidates survive per
    pair and side.  With ``uniform=True`` the survivors are drawn uniformly
    from the same candidates instead.
    """

    def __init__(self, graph, combos, filt: FilterState, cfg, uniform: bool = False):
        self.graph, self.combos, self.filter = graph, combos, filt
        self.budget = cfg.ns_budget
        self.L = cfg.L
        if cfg.ns_candidates % cfg.L:
            raise BudgetExceedsCandidates("ns_candidates must be a multiple of L")
        self.per_path = cfg.ns_candidates // cfg.L
        if self.budget > cfg.ns_candidates:
            raise BudgetExceedsCandidates(f"budget {self.budget} exceeds {cfg.ns_candidates} candidates")
        self.seed, self.uniform = cfg.seed, uniform
        self._epoch = None
        self._cand: dict = {}
        self.last_rates: list = []

    def candidates(self, k: int, side: str, epoch: int):
        if epoch != self._epoch:
            self._cand, self._epoch = {}, epoch
        key = (k, side)
        if key not in self._cand:
            c = self.combos[k]
            mp = c.source if side == "source" else c.target
            fc = self.filter.model.combos[k]
            low_mp = fc.source if side == "source" else fc.target
            n = self.graph.num_nodes(mp.type(0))
            low = self.filter.sampler.table(low_mp, epoch)
            low_mask = low == self.graph.num_nodes(low_mp.type(1))
            low_mask = np.stack([np.zeros_like(low_mask[..., 0]), low_mask[..., 1]], axis=-1)
            self._cand[key] = extend_many(self.graph, np.arange(n), low, low_mask, mp, self.per_path, self.seed,
                                          epoch)[0]
        return self._cand[key]

    def sample(self, sources, targets, epoch: int = 0) -> PairPaths:
        sources = np.asarray(sources, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.int64)
        low = self.filter.sampler.sample(sources, targets, epoch)
        beta = None if self.uniform else filter_beta(self.filter.model, low)
        B = sources.size
        out_s, out_t = [], []
        self.last_rates = []
        for k in range(len(self.combos)):
            sel = {}
            if beta is not None:
                ap = self.filter.model.config.mode == ALL_PAIRS
                weights = {sd: side_weights(beta[k], self.L, self.L, sd, ap) for sd in ("source", "target")}
            for side, anchors, lowp in (("source", sources, low.source[k]), ("target", targets, low.target[k])):
                cand = self.candidates(k, side, epoch)
                I = cand.shape[-1]
                chosen = np.empty((B, self.budget, I), dtype=np.int64)
                for b in range(B):
                    a = int(anchors[b])
                    rng = np.random.default_rng([self.seed, epoch, k, side == "source", a, int(targets[b])
                                                 if side == "source" else int(sources[b])])
                    rows = np.full(self.L, 1.0 / self.L) if beta is None else weights[side][b]
                    rates, gid = group_rates(rows, lowp[b])
                    members = [np.flatnonzero(np.repeat(gid, self.per_path) == g) for g in range(rates.size)]
                    if self.uniform:
                        keep = np.sort(rng.choice(self.L * self.per_path, self.budget, replace=False))
                        alloc = np.array([np.isin(m, keep).sum() for m in members])
                    else:
                        alloc = allocate(rates, [m.size for m in members], self.budget)
                        keep = _draw(members, alloc, rng)
                    chosen[b] = cand[a][keep]
                    if side == "source":
                        self.last_rates.append((k, a, rates, alloc, lowp[b]))
                sel[side] = chosen
            out_s.append(sel["source"])
            out_t.append(sel["target"])
        return PairPaths(out_s, out_t)


def write_rates(path, records) -> None:
    """Sidecar CSV with one row per group: ``anchor, group, beta, survivors``."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["anchor", "group", "beta", "survivors"])
        for anchor, rates in records:
            plan = rates.plan if rates.plan is not None else np.zeros(rates.beta.size, dtype=np.int64)
            for g, (b, n) in enumerate(zip(rates.beta, plan)):
                w.writerow([anchor, g, f"{b:.6f}", int(n)])
