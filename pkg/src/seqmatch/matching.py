"""Exact inner-product retrieval over the output item matrix."""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from .core import ShapeError
from .model.embedding import OOV, FeatureVocab


class ItemIndex:
    """Item matrix ``V`` (d, |I|) plus the index -> item id map."""

    def __init__(self, V: np.ndarray, item_ids: Sequence[Optional[str]]):
        V = np.asarray(V, dtype=np.float64)
        if V.ndim != 2 or V.shape[1] != len(item_ids):
            raise ShapeError(f"V {V.shape} does not match {len(item_ids)} item ids")
        self.V = V
        self.item_ids = list(item_ids)
        self._index = {iid: k for k, iid in enumerate(self.item_ids) if iid is not None}
        if len(self._index) != sum(iid is not None for iid in self.item_ids):
            raise ValueError("item ids must be unique")

    @classmethod
    def from_vocab(cls, V: np.ndarray, vocab: FeatureVocab) -> "ItemIndex":
        return cls(V, [None] + list(vocab.values["id"]))

    @property
    def d(self) -> int:
        return self.V.shape[0]

    def __len__(self) -> int:
        return self.V.shape[1]

    def index_of(self, item_id: str) -> int:
        return self._index.get(item_id, OOV)


def score_all(o: np.ndarray, index) -> np.ndarray:
    """``z_i = o . v_i`` for every column of ``V``; ``o`` may be (d,) or (B, d)."""
    V = index.V if isinstance(index, ItemIndex) else np.asarray(index, dtype=np.float64)
    o = np.asarray(o, dtype=np.float64)
    if o.shape[-1] != V.shape[0]:
        raise ShapeError(f"behaviour vector width {o.shape[-1]} != item dimension {V.shape[0]}")
    return o @ V


def top_n(scores: np.ndarray, n: int, exclude: Iterable[int] = ()) -> list[tuple[int, float]]:
    """Best ``n`` (index, score) pairs by descending score, ties by ascending index."""
    if n < 1:
        raise ValueError("n must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    eligible = np.ones(scores.shape[0], dtype=bool)
    ex = np.fromiter((int(e) for e in exclude), dtype=np.int64)
    ex = ex[(ex >= 0) & (ex < scores.shape[0])]
    eligible[ex] = False
    cand = np.flatnonzero(eligible)
    if cand.size == 0:
        return []
    s = scores[cand]
    n = min(n, cand.size)
    if n < cand.size:
        # keep everything tied with the n-th best so the tie rule stays exact
        kth = np.partition(-s, n - 1)[n - 1]
        keep = -s <= kth
        cand, s = cand[keep], s[keep]
    order = np.lexsort((cand, -s))[:n]
    return [(int(cand[k]), float(s[k])) for k in order]


def recommend_items(o: np.ndarray, index: ItemIndex, n: int, exclude: Iterable[int] = ()) -> list[tuple[str, float]]:
    """Top ``n`` item ids; the out-of-vocabulary slot is never returned."""
    ex = set(exclude)
    ex.add(OOV)
    return [(index.item_ids[k], s) for k, s in top_n(score_all(o, index), n, ex)]
