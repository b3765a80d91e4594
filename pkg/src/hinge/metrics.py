"""CTR and top-N metrics."""

import numpy as np

from .errors import EmptyEvalSet, LabelOutOfRange

PROB_EPS = 1e-7


def _check_labels(y):
    y = np.asarray(y)
    if y.size and not np.all((y == 0) | (y == 1)):
        raise LabelOutOfRange("labels must be 0 or 1")
    return y.astype(np.float64)


def log_loss(y, p) -> float:
    """Mean binary cross-entropy with predictions clamped to ``[1e-7, 1 - 1e-7]``."""
    y = _check_labels(np.atleast_1d(y))
    p = np.clip(np.atleast_1d(np.asarray(p, dtype=np.float64)), PROB_EPS, 1.0 - PROB_EPS)
    if y.size == 0:
        raise EmptyEvalSet("no predictions")
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def ctr_metrics(y, p) -> dict:
    """ACC at threshold 0.5, F1 of the positive class and mean log loss."""
    y = _check_labels(y)
    p = np.asarray(p, dtype=np.float64)
    if y.size == 0:
        raise EmptyEvalSet("empty evaluation set")
    pred = p >= 0.5
    pos = y == 1
    tp = np.sum(pred & pos)
    fp = np.sum(pred & ~pos)
    fn = np.sum(~pred & pos)
    denom = 2 * tp + fp + fn
    return {
        "acc": float(np.mean(pred == pos)),
        "f1": float(2 * tp / denom) if denom else 0.0,
        "logloss": log_loss(y, p),
    }


def average_precision_at(rels, k: int) -> float:
    """AP@k of a ranked 0/1 relevance list, normalised by min(#relevant, k)."""
    rels = np.asarray(rels, dtype=np.float64)
    total = rels.sum()
    if total == 0:
        return 0.0
    top = rels[:k]
    hits = np.cumsum(top)
    prec = hits / np.arange(1, top.size + 1)
    return float(np.sum(prec * top) / min(total, k))


def ndcg_at(rels, k: int) -> float:
    rels = np.asarray(rels, dtype=np.float64)
    disc = 1.0 / np.log2(np.arange(2, k + 2))
    dcg = float(np.sum(rels[:k] * disc[: min(k, rels.size)]))
    ideal = np.sort(rels)[::-1][:k]
    idcg = float(np.sum(ideal * disc[: ideal.size]))
    return dcg / idcg if idcg > 0 else 0.0


def topn_metrics(ranked_lists) -> dict:
    """Mean MAP@5, NDCG@3 and NDCG@5 over relevance lists already in ranked order."""
    lists = [np.asarray(r) for r in ranked_lists]
    if not lists:
        raise EmptyEvalSet("no ranked lists")
    return {
        "map5": float(np.mean([average_precision_at(r, 5) for r in lists])),
        "ndcg3": float(np.mean([ndcg_at(r, 3) for r in lists])),
        "ndcg5": float(np.mean([ndcg_at(r, 5) for r in lists])),
    }


def rank_by_score(scores, rels) -> np.ndarray:
    """Relevance list sorted by descending score; ties keep the original order."""
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return np.asarray(rels)[order]
