"""Log-uniform (Zipfian) negative sampler over frequency-ranked items."""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np


def log_uniform_probs(V: int) -> np.ndarray:
    """``P(r) = log((r+2)/(r+1)) / log(V+1)`` for ranks ``0..V-1``."""
    r = np.arange(V, dtype=np.float64)
    return (np.log1p(1.0 / (r + 1.0))) / np.log(V + 1.0)


def draw_ranks(V: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent ranks (with replacement) by inverting the CDF."""
    u = rng.random(n)
    r = np.floor(np.exp(u * np.log(V + 1.0))).astype(np.int64) - 1
    return np.clip(r, 0, V - 1)


def log_uniform_sample(
    V: int,
    n: int,
    exclude: Iterable[int] = (),
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, int]:
    """Draw ``n`` distinct ranks not in ``exclude``; also return the number of raw draws used.

    When ``n`` equals the number of eligible ranks every one of them is returned
    in ascending order and the draw count is reported as 0.
    """
    if rng is None:
        rng = np.random.default_rng()
    excluded = {int(e) for e in exclude if 0 <= int(e) < V}
    eligible = V - len(excluded)
    if n < 0 or n > eligible:
        raise ValueError(f"cannot draw {n} distinct samples from {eligible} eligible of {V}")
    if n == eligible:
        return np.array([r for r in range(V) if r not in excluded], dtype=np.int64), 0
    picked: list[int] = []
    seen = set(excluded)
    tries = 0
    chunk = max(16, 2 * n)
    while len(picked) < n:
        for r in draw_ranks(V, chunk, rng):
            tries += 1
            r = int(r)
            if r not in seen:
                seen.add(r)
                picked.append(r)
                if len(picked) == n:
                    break
    return np.array(picked, dtype=np.int64), tries


class LogUniformSampler:
    """Maps ranks to item indices; rank 0 is the most frequent training item."""

    def __init__(self, ranked_items: np.ndarray, n_index: Optional[int] = None):
        self.ranked_items = np.asarray(ranked_items, dtype=np.int64)
        self.V = len(self.ranked_items)
        if self.V == 0:
            raise ValueError("sampler needs at least one item")
        size = int(n_index if n_index is not None else self.ranked_items.max() + 1)
        self.rank_of = np.full(size, -1, dtype=np.int64)
        self.rank_of[self.ranked_items] = np.arange(self.V)
        self.probs = log_uniform_probs(self.V)

    @classmethod
    def from_counts(cls, counts: np.ndarray, skip: Iterable[int] = (0,)) -> "LogUniformSampler":
        """Rank indices by descending count, ties by ascending index; ``skip`` indices never sampled."""
        counts = np.asarray(counts)
        skip = set(skip)
        idx = np.array([i for i in range(len(counts)) if i not in skip], dtype=np.int64)
        order = np.lexsort((idx, -counts[idx]))
        return cls(idx[order], n_index=len(counts))

    def sample(self, n: int, rng: np.random.Generator, exclude: Iterable[int] = ()) -> tuple[np.ndarray, np.ndarray]:
        """``n`` distinct item indices and their expected counts under the draw procedure."""
        ex_ranks = [int(self.rank_of[i]) for i in exclude if 0 <= i < len(self.rank_of) and self.rank_of[i] >= 0]
        ranks, tries = log_uniform_sample(self.V, n, ex_ranks, rng)
        if tries == 0:
            expected = np.ones(len(ranks))
        else:
            p = self.probs[ranks]
            expected = -np.expm1(tries * np.log1p(-p))  # 1 - (1-p)^tries
        return self.ranked_items[ranks], expected
