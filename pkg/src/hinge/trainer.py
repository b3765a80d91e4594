"""Training loop, early stopping, evaluation and run artefacts."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import LabeledPairs, format_value
from .errors import ConfigError, DivergedLoss, EmptyEvalSet, EmptySplit, LabelOutOfRange
from .metrics import ctr_metrics, rank_by_score, topn_metrics
from .model import HingeModel, PairPaths
from .tensor import Adam, Tensor, backward, clip, get_tape, log, mean, no_grad, set_debug

log_ = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "split", "acc", "f1", "logloss", "map5", "ndcg3", "ndcg5"]
EVAL_EPOCH_KEY = 0


@dataclass
class TrainConfig:
    E: int = 128
    L: int = 16
    heads: int = 3
    elem_temperature: float = 0.2
    path_temperature: float = 0.2
    split: tuple = (0.6, 0.2, 0.2)
    patience: int = 25
    max_epochs: int = 200
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 128
    eval_batch_size: int = 512
    ns_enabled: bool = False
    cross_enabled: bool = False
    all_pairs_enabled: bool = False
    seed: int = 0
    metapaths: tuple = ("UMUM", "UMMM", "UOUM", "UMGM")
    nonlinearity: str = "elu"
    shared_qk: bool = True
    method: str = "fft"
    interaction: str = "conv"
    resample_paths: bool = True
    ns_candidates: int = 128
    ns_budget: int = 16
    ns_epochs: int = 10
    ns_all_pairs: bool = True  # filter pairs every source prefix with every target prefix
    topn_negatives: int = 49
    topn_users: int = 0  # 0 evaluates every test user
    movie_neighbors: int = 30
    debug_nan: bool = False

    def __post_init__(self):
        for name in ("E", "L", "heads", "patience", "max_epochs", "batch_size", "ns_candidates", "ns_budget"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        kw = {}
        known = {f.name: f for f in fields(cls)}
        for k, v in values.items():
            if k not in known:
                continue
            default = known[k].default
            kw[k] = _coerce(k, v, default)
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(key, v, default):
    if not isinstance(v, str):
        return v
    try:
        if isinstance(default, bool):
            if v.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(v)
            return v.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(v)
        if isinstance(default, float):
            return float(v)
        if isinstance(default, tuple):
            items = [x.strip() for x in v.split(",") if x.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(x) for x in items)
            return tuple(items)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {v!r}") from None
    return v


def bce(y: Tensor, labels: np.ndarray) -> Tensor:
    """Mean log loss of clamped predictions ``y`` against 0/1 ``labels``."""
    lab = np.asarray(labels, dtype=np.float32)
    if lab.size and not np.all((lab == 0) | (lab == 1)):
        raise LabelOutOfRange("labels must be 0 or 1")
    y = clip(y, 1e-7, 1.0 - 1e-7)
    return mean(-(lab * log(y) + (1.0 - lab) * log(1.0 - y)))


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    epochs_run: int
    best_state: dict
    test: dict | None = None


def predict_pairs(model: HingeModel, provider, pairs: LabeledPairs, epoch_key: int = EVAL_EPOCH_KEY,
                  batch_size: int = 512) -> np.ndarray:
    out = np.empty(len(pairs), dtype=np.float64)
    with no_grad():
        for lo in range(0, len(pairs), batch_size):
            sl = slice(lo, lo + batch_size)
            batch = provider.sample(pairs.sources[sl], pairs.targets[sl], epoch_key)
            out[sl] = model(batch).data
    return out


def evaluate_ctr(model: HingeModel, provider, pairs: LabeledPairs, batch_size: int = 512) -> dict:
    if len(pairs) == 0:
        raise EmptyEvalSet("no evaluation pairs")
    return ctr_metrics(pairs.labels, predict_pairs(model, provider, pairs, batch_size=batch_size))


def build_topn_lists(test: LabeledPairs, interacted: dict, n_targets: int, negatives: int = 49, seed: int = 0,
                     max_users: int = 0):
    """Candidate lists: each positive test target plus ``negatives`` targets the
    source never interacted with.  Returns ``[(source, candidates)]`` with the
    positive stored last."""
    rng = np.random.default_rng(seed)
    pos = test.labels == 1
    users = np.unique(test.sources[pos])
    if max_users and users.size > max_users:
        users = np.sort(rng.choice(users, max_users, replace=False))
    out = []
    for u in users:
        seen = interacted.get(int(u), set())
        pool = np.setdiff1d(np.arange(n_targets), np.fromiter(seen, dtype=np.int64, count=len(seen)))
        if pool.size < negatives:
            continue
        for t in np.sort(test.targets[pos & (test.sources == u)]):
            negs = rng.choice(pool, negatives, replace=False)
            out.append((int(u), np.concatenate([negs, [t]])))
    return out


def evaluate_topn(model: HingeModel, provider, lists, batch_size: int = 512) -> dict:
    """MAP@5 / NDCG@3 / NDCG@5, averaged within each user then over users."""
    if not lists:
        raise EmptyEvalSet("no ranked lists")
    src = np.concatenate([np.full(len(c), u) for u, c in lists])
    tgt = np.concatenate([c for _, c in lists])
    scores = predict_pairs(model, provider, LabeledPairs(src, tgt, np.zeros_like(src)), batch_size=batch_size)
    per_user: dict = {}
    pos = 0
    for u, c in lists:
        s = scores[pos: pos + len(c)]
        pos += len(c)
        rels = np.zeros(len(c))
        rels[-1] = 1.0
        per_user.setdefault(u, []).append(rank_by_score(s, rels))
    user_means = [topn_metrics(r) for _, r in sorted(per_user.items())]
    return {k: float(np.mean([m[k] for m in user_means])) for k in ("map5", "ndcg3", "ndcg5")}


def train(model: HingeModel, train_pairs: LabeledPairs, val_pairs: LabeledPairs, config: TrainConfig,
          provider, callback=None) -> TrainResult:
    """Minibatch Adam on the log loss with patience-based early stopping on val ACC.

    Training epoch ``e`` draws neighbourhoods with key ``e`` (or ``1`` when
    resampling is off); validation always uses key 0.  The best-ACC state is
    restored into ``model`` before returning.
    """
    if len(train_pairs) == 0:
        raise EmptySplit("empty training split")
    if len(val_pairs) == 0:
        raise EmptySplit("empty validation split")
    set_debug(config.debug_nan)
    opt = Adam(model.params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)
    history = []
    best_acc, best_epoch, wait = -1.0, 0, 0
    best_state = model.store.state()
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        perm = rng.permutation(len(train_pairs))
        key = epoch if config.resample_paths else 1
        losses, preds = [], np.empty(len(train_pairs))
        for lo in range(0, len(perm), config.batch_size):
            idx = perm[lo: lo + config.batch_size]
            batch = provider.sample(train_pairs.sources[idx], train_pairs.targets[idx], key)
            opt.zero_grad()
            y = model(batch)
            loss = bce(y, train_pairs.labels[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                get_tape().clear()
                raise DivergedLoss(f"non-finite loss at epoch {epoch}, batch starting {lo}")
            backward(loss)
            opt.step()
            losses.append(value * len(idx))
            preds[idx] = y.data
        tr = ctr_metrics(train_pairs.labels, preds)
        tr["logloss"] = float(np.sum(losses) / len(train_pairs))
        va = evaluate_ctr(model, provider, val_pairs, config.eval_batch_size)
        history.append({"epoch": epoch, "split": "train", **tr})
        history.append({"epoch": epoch, "split": "val", **va})
        log_.info("epoch %d train_loss %.4f val_acc %.4f val_logloss %.4f", epoch, tr["logloss"], va["acc"],
                  va["logloss"])
        if callback is not None:
            callback(epoch, tr, va)
        if va["acc"] > best_acc:
            best_acc, best_epoch, wait = va["acc"], epoch, 0
            best_state = model.store.state()
        else:
            wait += 1
            if wait >= config.patience:
                break
    model.store.load_state(best_state)
    return TrainResult(history, best_epoch, epoch, best_state)


def write_history(history, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([_fmt(row.get(c, "")) for c in HISTORY_COLUMNS])


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def write_manifest(path, config: TrainConfig, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for k, v in config.to_dict().items():
            f.write(f"{k}={format_value(v)}\n")
        for k, v in (extra or {}).items():
            f.write(f"{k}={format_value(v)}\n")
