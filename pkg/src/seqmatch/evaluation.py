"""Offline HitRate / Precision / Recall / F1 at K."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data.events import TestCase
from .matching import ItemIndex, score_all, top_n
from .model.embedding import OOV
from .model.sdm import SDMModel

AGGREGATION = "macro-average over users: per-user precision, recall and f1 averaged with equal user weight; hit_rate over test cases"


def hit_rate_at_k(cases: Sequence[tuple[Sequence, Iterable]], K: int) -> float:
    """Fraction of ``(recommended, ground_truth)`` cases sharing at least one item."""
    if not cases:
        raise ValueError("hit rate needs at least one case")
    hits = 0
    for rec, truth in cases:
        if len(rec) > K:
            raise ValueError(f"recommendation list of length {len(rec)} exceeds K={K}")
        hits += bool(set(rec) & set(truth))
    return hits / len(cases)


def precision_recall_f1_at_k(recommended: Sequence, truth: Iterable, K: int) -> tuple[float, float, float]:
    truth = set(truth)
    if not truth:
        raise ValueError("ground truth must be non-empty")
    n_hit = len(set(recommended) & truth)
    p = n_hit / K
    r = n_hit / len(truth)
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f1


@dataclass
class EvalReport:
    K: int
    n_cases: int
    n_users: int
    hit_rate: float
    precision: float
    recall: float
    f1: float
    per_user: dict = field(default_factory=dict)
    aggregation: str = AGGREGATION

    def to_json(self) -> dict:
        return {
            "aggregation": self.aggregation,
            "K": self.K,
            "N": self.n_cases,
            "n_users": self.n_users,
            "hit_rate": self.hit_rate,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_user": self.per_user,
        }


def report_from_lists(
    user_ids: Sequence[str],
    recommended: Sequence[Sequence],
    truths: Sequence[Iterable],
    K: int,
) -> EvalReport:
    """Build a report from already-retrieved top-K lists."""
    truths = [set(t) for t in truths]
    hr = hit_rate_at_k(list(zip(recommended, truths)), K)
    per_case: dict[str, list] = {}
    for u, rec, truth in zip(user_ids, recommended, truths):
        per_case.setdefault(u, []).append(precision_recall_f1_at_k(rec, truth, K))
    per_user = {}
    for u in sorted(per_case):
        vals = np.array(per_case[u])
        per_user[u] = {"precision": float(vals[:, 0].mean()), "recall": float(vals[:, 1].mean()), "f1": float(vals[:, 2].mean()), "cases": len(vals)}
    users = list(per_user.values())
    return EvalReport(
        K=K,
        n_cases=len(recommended),
        n_users=len(per_user),
        hit_rate=hr,
        precision=float(np.mean([x["precision"] for x in users])),
        recall=float(np.mean([x["recall"] for x in users])),
        f1=float(np.mean([x["f1"] for x in users])),
        per_user=per_user,
    )


def rank_test_cases(model: SDMModel, cases: Sequence[TestCase], K: int, batch_size: int = 512) -> list[list[str]]:
    """Top-K item ids per case, excluding items of the fed prefix."""
    index = ItemIndex.from_vocab(model.output_matrix().data, model.vocab)
    out: list = [None] * len(cases)
    by_len: dict[int, list[int]] = {}
    for k, c in enumerate(cases):
        by_len.setdefault(len(c.prefix), []).append(k)
    for T in sorted(by_len):
        idxs = by_len[T]
        for start in range(0, len(idxs), batch_size):
            chunk = idxs[start : start + batch_size]
            batch = model.make_batch(
                [cases[k].prefix for k in chunk],
                [cases[k].long_term for k in chunk],
                [cases[k].profile for k in chunk],
            )
            scores = score_all(model.behaviour_vectors(batch), index)
            for row, k in enumerate(chunk):
                exclude = {index.index_of(e.item_id) for e in cases[k].prefix}
                exclude.add(OOV)
                out[k] = [index.item_ids[i] for i, _ in top_n(scores[row], K, exclude)]
    return out


def evaluate(model: SDMModel, cases: Sequence[TestCase], Ks: Sequence[int] = (100, 20)) -> dict[int, EvalReport]:
    if not cases:
        raise ValueError("no test cases to evaluate")
    ranked = rank_test_cases(model, cases, max(Ks))
    users = [c.user_id for c in cases]
    truths = [c.ground_truth for c in cases]
    return {K: report_from_lists(users, [r[:K] for r in ranked], truths, K) for K in Ks}
