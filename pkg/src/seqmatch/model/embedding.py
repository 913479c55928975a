"""Feature vocabularies, input embedding tables and the output item matrix."""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from ..core import Tensor, concat, take
from ..data.events import ITEM_FEATURES, UserHistory

OOV = 0


class FeatureVocab:
    """value -> index per feature; index 0 is reserved for unseen values."""

    def __init__(self, values: Mapping[str, Sequence[str]]):
        self.values = {f: list(vs) for f, vs in values.items()}
        self.index = {f: {v: i + 1 for i, v in enumerate(vs)} for f, vs in self.values.items()}

    @classmethod
    def build(cls, histories: Iterable[UserHistory], profile_features: Sequence[str]) -> "FeatureVocab":
        seen: dict[str, set] = {f: set() for f in (*ITEM_FEATURES, *profile_features)}
        for h in histories:
            for e in h.short_term.events:
                for f in ITEM_FEATURES:
                    v = e.item_features.get(f)
                    if v is not None:
                        seen[f].add(v)
            for f in ITEM_FEATURES:
                seen[f].update(h.long_term.get(f, ()))
            for p in profile_features:
                v = h.profile.get(p)
                if v is not None:
                    seen[p].add(v)
        # sorted so index order is lexicographic in the raw value
        return cls({f: sorted(vs) for f, vs in seen.items()})

    def size(self, feature: str) -> int:
        return len(self.values[feature]) + 1

    def lookup(self, feature: str, value) -> int:
        return self.index[feature].get(value, OOV)

    def lookup_many(self, feature: str, values: Iterable) -> np.ndarray:
        table = self.index[feature]
        return np.array([table.get(v, OOV) for v in values], dtype=np.int64)

    def item_id(self, index: int) -> str:
        if index == OOV:
            raise IndexError("index 0 is the out-of-vocabulary slot")
        return self.values["id"][index - 1]

    def to_json(self) -> dict:
        return {f: list(vs) for f, vs in self.values.items()}

    @classmethod
    def from_json(cls, data: Mapping) -> "FeatureVocab":
        return cls(data)


def split_widths(d: int, n: int) -> list[int]:
    """First feature gets half of ``d`` plus any remainder; the rest share the other half."""
    if n == 1:
        return [d]
    share = (d // 2) // (n - 1)
    if share < 1:
        raise ValueError(f"d={d} too small to give {n} features a positive width")
    return [d - share * (n - 1)] + [share] * (n - 1)


def embed_item(feature_idx: np.ndarray, tables: Mapping[str, Tensor], features: Sequence[str]) -> Tensor:
    """Concatenate per-feature rows; ``feature_idx[..., k]`` indexes ``features[k]``."""
    feature_idx = np.asarray(feature_idx, dtype=np.int64)
    parts = [take(tables[f], feature_idx[..., k]) for k, f in enumerate(features)]
    return parts[0] if len(parts) == 1 else concat(parts, axis=-1)


def embed_user_profile(profile_idx: np.ndarray, tables: Mapping[str, Tensor], features: Sequence[str]) -> Tensor:
    return embed_item(profile_idx, tables, features)


def output_item_vector(index: int, V: Tensor) -> Tensor:
    n = V.shape[1]
    if not 0 <= index < n:
        raise IndexError(f"item index {index} out of range for {n} items")
    return V[:, index]
