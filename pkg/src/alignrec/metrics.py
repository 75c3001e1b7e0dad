"""Alignment and recommendation metrics plus the early-stopping rule.

All ranking is exact over the full candidate set with ties broken by the
smaller id, so every metric is a deterministic function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ValidationError


@dataclass
class MetricReport:
    metrics: dict[str, float | None]
    counts: dict[str, int] = field(default_factory=dict)
    ks: list[int] = field(default_factory=list)

    def as_dict(self) -> dict:
        out: dict = dict(self.metrics)
        out.update({f"n_{k}": v for k, v in self.counts.items()})
        return out


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def eval_alignment(
    emb_a: np.ndarray,
    emb_b: np.ndarray,
    pairs: list[tuple[int, int]],
    ks: list[int] = (1, 10),
) -> MetricReport:
    """Hits@K and MRR for ranking every b-side candidate by cosine similarity."""
    ks = sorted(ks)
    emb_a = np.asarray(emb_a, dtype=np.float64)
    emb_b = np.asarray(emb_b, dtype=np.float64)
    for a, b in pairs:
        if not 0 <= a < emb_a.shape[0]:
            raise ContractError(f"missing embedding for a-side entity {a}")
        if not 0 <= b < emb_b.shape[0]:
            raise ContractError(f"missing embedding for b-side entity {b}")
    unit_b = _unit_rows(emb_b)
    ranks = []
    for a, b in pairs:
        norm_a = np.linalg.norm(emb_a[a])
        query = emb_a[a] / norm_a if norm_a > 0 else emb_a[a]
        sims = unit_b @ query
        # Rank = candidates strictly better, counting earlier ids on ties.
        better = np.sum(sims > sims[b])
        tied_before = np.sum((sims == sims[b]) & (np.arange(len(sims)) < b))
        ranks.append(int(better + tied_before) + 1)
    ranks_arr = np.array(ranks, dtype=np.float64)
    metrics: dict[str, float | None] = {}
    for k in ks:
        metrics[f"hits@{k}"] = float(np.mean(ranks_arr <= k)) if ranks else 0.0
    metrics["mrr"] = float(np.mean(1.0 / ranks_arr)) if ranks else 0.0
    return MetricReport(
        metrics=metrics,
        counts={"pairs": len(pairs), "candidates": emb_b.shape[0]},
        ks=list(ks),
    )


def auc_score(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """Rank-statistic AUC with ties counted one half; None if single-class."""
    labels = np.asarray(labels)
    pos = int(np.sum(labels == 1))
    neg = int(np.sum(labels == 0))
    if pos == 0 or neg == 0:
        return None
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = np.asarray(scores)[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg)


def _user_ranking(items: np.ndarray, scores: np.ndarray) -> np.ndarray:
    order = np.lexsort((items, -scores))
    return items[order]


def eval_recommendation(
    scores,
    labels,
    users,
    ks: list[int] = (5, 10),
) -> MetricReport:
    """AUC over all records plus per-user Recall@K and NDCG@K, macro-averaged."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    users = np.asarray(users, dtype=np.int64)
    if not (len(scores) == len(labels) == len(users)):
        raise ValidationError("scores, labels and users must be equal length")
    ks = sorted(ks)
    metrics: dict[str, float | None] = {"auc": auc_score(scores, labels)}
    recalls = {k: [] for k in ks}
    ndcgs = {k: [] for k in ks}
    for u in np.unique(users):
        sel = users == u
        items = np.arange(len(scores))[sel]
        relevant = set(items[labels[sel] == 1])
        if not relevant:
            continue
        ranked = _user_ranking(items, scores[sel])
        gains = np.array([1.0 if it in relevant else 0.0 for it in ranked])
        discounts = 1.0 / np.log2(np.arange(2, len(ranked) + 2))
        for k in ks:
            top = ranked[:k]
            hit = sum(1 for it in top if it in relevant)
            recalls[k].append(hit / len(relevant))
            dcg = float(np.sum(gains[:k] * discounts[:k]))
            ideal_hits = min(len(relevant), k)
            idcg = float(np.sum(discounts[:ideal_hits]))
            ndcgs[k].append(dcg / idcg if idcg > 0 else 0.0)
    for k in ks:
        metrics[f"recall@{k}"] = float(np.mean(recalls[k])) if recalls[k] else 0.0
        metrics[f"ndcg@{k}"] = float(np.mean(ndcgs[k])) if ndcgs[k] else 0.0
    return MetricReport(
        metrics=metrics,
        counts={"records": len(scores), "users": len(np.unique(users))},
        ks=list(ks),
    )


def early_stop_check(history: list[float], patience: int) -> tuple[bool, int]:
    """Stop once the metric has gone ``patience`` epochs without strictly improving.

    Returns (should_stop, best_epoch). Higher is better.
    """
    if patience < 1:
        raise ValidationError(f"patience must be >= 1, got {patience}")
    if not history:
        return False, -1
    best_epoch = 0
    stale = 0
    for epoch in range(1, len(history)):
        if history[epoch] > history[best_epoch]:
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                return True, best_epoch
    return False, best_epoch
