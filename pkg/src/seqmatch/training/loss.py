"""Sampled-softmax cross-entropy."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .. import core
from ..core import Tensor


def sampled_softmax_loss(
    o: Tensor,
    V: Tensor,
    positives: np.ndarray,
    pos_mask: np.ndarray,
    negatives: np.ndarray,
    expected_counts: Optional[np.ndarray] = None,
) -> Tensor:
    """Mean cross-entropy over rows, each row a softmax over its positives plus shared negatives.

    o: (N, d) behaviour vectors. V: (d, |I|). positives: (N, P) indices with
    ``pos_mask`` marking real entries. negatives: (S,) shared by all rows; a
    negative that equals one of a row's positives is dropped for that row.
    ``expected_counts`` (S,) turns on the log expected-count correction of the
    negative logits.
    """
    positives = np.asarray(positives, dtype=np.int64)
    pos_mask = np.asarray(pos_mask, dtype=bool)
    negatives = np.asarray(negatives, dtype=np.int64)
    N, d = o.shape
    if positives.shape[0] != N or pos_mask.shape != positives.shape:
        raise core.ShapeError(f"positives {positives.shape} / mask {pos_mask.shape} do not match {N} rows")
    if np.any(pos_mask.sum(axis=1) == 0):
        raise ValueError("every row needs at least one positive")
    Vt = core.transpose(V)  # (|I|, d)
    pos_vec = core.take(Vt, positives)  # (N, P, d)
    pos_logits = core.tsum(pos_vec * core.reshape(o, (N, 1, d)), axis=-1)
    logits = pos_logits
    mask = pos_mask
    if negatives.size:
        neg_logits = core.matmul(o, core.transpose(core.take(Vt, negatives)))  # (N, S)
        if expected_counts is not None:
            neg_logits = neg_logits - np.log(np.asarray(expected_counts, dtype=np.float64))
        hit = np.any((positives[:, :, None] == negatives[None, None, :]) & pos_mask[:, :, None], axis=1)
        logits = core.concat([pos_logits, neg_logits], axis=-1)
        mask = np.concatenate([pos_mask, ~hit], axis=1)
    logp = core.log_softmax(logits, axis=-1, mask=mask)
    P = positives.shape[1]
    weights = pos_mask / pos_mask.sum(axis=1, keepdims=True)
    per_row = core.tsum(logp[:, :P] * weights, axis=1)
    return -core.mean(per_row)


def example_loss(
    o: Tensor,
    V: Tensor,
    positives: Sequence[int],
    negatives: Sequence[int],
    expected_counts: Optional[np.ndarray] = None,
) -> Tensor:
    """Single-example loss over ``K = positives + negatives``; overlapping sets are an error."""
    pos = list(dict.fromkeys(int(p) for p in positives))
    neg = [int(n) for n in negatives]
    if not pos:
        raise ValueError("need at least one positive")
    overlap = set(pos) & set(neg)
    if overlap:
        raise ValueError(f"positives and negatives overlap: {sorted(overlap)}")
    if len(set(neg)) != len(neg):
        raise ValueError("negatives must be distinct")
    d = o.shape[-1]
    return sampled_softmax_loss(
        core.reshape(o, (1, d)),
        V,
        np.array([pos]),
        np.ones((1, len(pos)), dtype=bool),
        np.array(neg, dtype=np.int64),
        expected_counts,
    )
